"""Compile-time weight slicing search and center solving.

For every non-final layer all 8b slicings are tried: centers are solved,
the layer is simulated with 1b input slices on a few test inputs, and the
slicing with the fewest slices whose error on non-zero outputs stays under
the budget is kept.  The last layer always uses eight 1b weight slices.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bitslice import Slicing, enumerate_slicings
from .encoder import CENTER, CenterSolver, chunk_bounds, solve_centers
from .layers import LayerSpec
from .oracle import ideal_layer, run_network
from .pipeline import InputPlan, simulate_layer
from .xbar import CrossbarConfig

log = logging.getLogger(__name__)

DEFAULT_ERROR_BUDGET = 0.09
DEFAULT_TEST_INPUTS = 10
LAST_LAYER_SLICING = Slicing((1,) * 8)


@dataclass
class SlicingTrial:
    slicing: Slicing
    error: float
    saturations: int


@dataclass
class SearchResult:
    slicing: Slicing
    centers: np.ndarray
    error: float
    fallback: bool
    trials: list[SlicingTrial] = field(default_factory=list)


@dataclass
class CompiledLayer:
    spec: LayerSpec
    slicing: Slicing
    centers: np.ndarray
    rows: int
    measured_error: float
    error_budget: float
    fallback: bool = False
    forced: bool = False
    candidates_evaluated: int = 0
    center_mode: str = CENTER

    @property
    def name(self) -> str:
        return self.spec.name


def layer_error(expected, actual) -> float:
    """Mean absolute error over positions where the expected output is non-zero."""
    e = np.asarray(expected, dtype=np.int64)
    a = np.asarray(actual, dtype=np.int64)
    if e.shape != a.shape:
        raise ValueError(f"shape mismatch: {e.shape} vs {a.shape}")
    mask = e != 0
    if not mask.any():
        return 0.0
    return float(np.abs(e[mask] - a[mask]).mean())


def _evaluate(layer, inputs, expected, slicing, centers, config, layer_index):
    r = simulate_layer(layer, inputs, slicing, centers, config, InputPlan.recovery_only(),
                       layer_index=layer_index)
    return layer_error(expected, r.outputs), r.metrics.total_saturations


def search_slicings(layer: LayerSpec, test_inputs: np.ndarray,
                    budget: float = DEFAULT_ERROR_BUDGET,
                    config: CrossbarConfig | None = None,
                    candidates: list[Slicing] | None = None,
                    layer_index: int = 0, jobs: int = 1) -> SearchResult:
    """Evaluate every candidate slicing; see :func:`find_best_slicing` for the rule."""
    config = config or CrossbarConfig()
    test_inputs = np.asarray(test_inputs)
    if test_inputs.size == 0 or test_inputs.shape[0] == 0:
        raise ValueError(f"{layer.name}: no test inputs")
    if budget <= 0:
        raise ValueError("error budget must be positive")
    candidates = candidates if candidates is not None else enumerate_slicings()
    expected = ideal_layer(layer, test_inputs)[1]
    solver = CenterSolver(layer.weight_matrix(), config.rows)

    def trial(s):
        centers = solver.solve(s)
        err, sats = _evaluate(layer, test_inputs, expected, s, centers, config, layer_index)
        return SlicingTrial(s, err, sats), centers

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(trial, candidates))
    else:
        results = [trial(s) for s in candidates]
    trials = [t for t, _ in results]

    passing = [i for i, t in enumerate(trials) if t.error < budget]
    if passing:
        best = min(passing, key=lambda i: (len(trials[i].slicing), trials[i].error, i))
        fallback = False
    else:
        best = min(range(len(trials)),
                   key=lambda i: (trials[i].error, len(trials[i].slicing), i))
        fallback = True
        log.warning("%s: no slicing meets budget %g; using minimum-error %s (error %.4g)",
                    layer.name, budget, trials[best].slicing, trials[best].error)
    return SearchResult(trials[best].slicing, results[best][1], trials[best].error,
                        fallback, trials)


def find_best_slicing(layer: LayerSpec, test_inputs: np.ndarray,
                      budget: float = DEFAULT_ERROR_BUDGET,
                      config: CrossbarConfig | None = None) -> Slicing:
    """Fewest-slice slicing whose error is below ``budget``.

    Slice-count ties go to the lower error, then to enumeration order. If
    nothing meets the budget, the minimum-error slicing is returned.
    """
    return search_slicings(layer, test_inputs, budget, config).slicing


def compile_layer(layer: LayerSpec, test_inputs: np.ndarray,
                  budget: float = DEFAULT_ERROR_BUDGET,
                  config: CrossbarConfig | None = None, layer_index: int = 0,
                  jobs: int = 1, center_mode: str = CENTER) -> CompiledLayer:
    config = config or CrossbarConfig()
    if layer.is_last_layer:
        centers = solve_centers(layer.weight_matrix(), LAST_LAYER_SLICING, config.rows,
                                center_mode, layer.weight_zero_point)
        expected = ideal_layer(layer, test_inputs)[1]
        err, _ = _evaluate(layer, test_inputs, expected, LAST_LAYER_SLICING, centers,
                           config, layer_index)
        return CompiledLayer(layer, LAST_LAYER_SLICING, centers, config.rows, err, budget,
                             forced=True, candidates_evaluated=1, center_mode=center_mode)
    if center_mode != CENTER:
        raise ValueError("slicing search is defined for solved centers only")
    res = search_slicings(layer, test_inputs, budget, config, layer_index=layer_index,
                          jobs=jobs)
    log.info("%s: slicing %s error %.4g%s", layer.name, res.slicing, res.error,
             " (fallback)" if res.fallback else "")
    return CompiledLayer(layer, res.slicing, res.centers, config.rows, res.error, budget,
                         fallback=res.fallback, candidates_evaluated=len(res.trials))


def compile_network(layers: list[LayerSpec], test_inputs: np.ndarray,
                    budget: float = DEFAULT_ERROR_BUDGET,
                    config: CrossbarConfig | None = None, jobs: int = 1) -> list[CompiledLayer]:
    """Compile each layer on oracle activations of the shared test inputs."""
    config = config or CrossbarConfig()
    if not layers:
        raise ValueError("network has no layers")
    acts = run_network(layers, test_inputs)
    out = []
    for i, layer in enumerate(layers):
        out.append(compile_layer(layer, acts[i], budget, config, layer_index=i, jobs=jobs))
    return out


def fixed_layer(layer: LayerSpec, slicing: Slicing, config: CrossbarConfig,
                center_mode: str = CENTER) -> CompiledLayer:
    """Encode a layer with a given slicing and no search (ablation baselines)."""
    centers = solve_centers(layer.weight_matrix(), slicing, config.rows, center_mode,
                            layer.weight_zero_point)
    return CompiledLayer(layer, slicing, centers, config.rows, float("nan"), float("nan"),
                         center_mode=center_mode)


def n_chunks(layer: LayerSpec, rows: int) -> int:
    return len(chunk_bounds(layer.fan_in, rows))
