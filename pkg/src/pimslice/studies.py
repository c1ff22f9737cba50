"""Ablation and noise studies built from the compiler and pipeline."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bitslice import Slicing
from .compiler import CompiledLayer, compile_network, fixed_layer, layer_error
from .encoder import CENTER, UNSIGNED, solve_centers
from .layers import LayerSpec
from .metrics import RunMetrics, histogram_report
from .oracle import run_network
from .pipeline import InputPlan, raw_column_sums, simulate_layer
from .xbar import CrossbarConfig

ISAAC = "isaac"
CENTER_OFFSET = "center_offset"
ADAPTIVE = "adaptive_weight_slicing"
SPECULATIVE = "speculation"
SETUPS = (ISAAC, CENTER_OFFSET, ADAPTIVE, SPECULATIVE)

LADDER = ("unsigned", "center_offset", "adaptive_weight_slicing", "speculation", "recovery")
# rungs that must strictly reduce raw saturation; speculation sits between the last two
STRICT_LADDER = ("unsigned", "center_offset", "adaptive_weight_slicing", "recovery")

ISAAC_CONFIG = CrossbarConfig(rows=128, adc_bits=8, adc_signed=False)
TWO_BIT = Slicing((2, 2, 2, 2))
FOUR_BIT = (4, 4)


@dataclass
class SetupResult:
    setup: str
    layers: list[CompiledLayer]
    per_layer: list[RunMetrics]
    total: RunMetrics = field(default_factory=RunMetrics)


def _run_setup(name, compiled, acts, config, plan, seed) -> SetupResult:
    cfg = CrossbarConfig(config.rows, config.adc_bits, config.adc_signed,
                         config.dac_max_bits, config.noise_level, seed)
    res = SetupResult(name, compiled, [])
    for i, c in enumerate(compiled):
        r = simulate_layer(c.spec, acts[i], c.slicing, c.centers, cfg, plan, layer_index=i)
        res.per_layer.append(r.metrics)
        res.total.merge(r.metrics)
    return res


def run_ablation(layers: list[LayerSpec], inputs: np.ndarray, budget: float = 0.09,
                 seed: int = 0, test_inputs: int = 10,
                 spec_widths=(4, 2, 2)) -> tuple[list[SetupResult], dict]:
    """The four cumulative setups plus the column-sum distribution ladder.

    Layers run on oracle activations so one layer's errors do not leak into the next.
    """
    inputs = np.asarray(inputs)
    if inputs.ndim == 0 or inputs.shape[0] == 0:
        raise ValueError("ablation needs at least one input sample")
    acts = run_network(layers, inputs)
    test = run_network(layers, inputs[:test_inputs])
    raella = CrossbarConfig(rows=512, adc_bits=7, rng_seed=seed)
    rec_only = InputPlan.recovery_only()
    spec = InputPlan(tuple(spec_widths))

    isaac_layers = [fixed_layer(l, TWO_BIT, ISAAC_CONFIG, UNSIGNED) for l in layers]
    co_layers = [fixed_layer(l, TWO_BIT, raella, CENTER) for l in layers]
    aws_layers = compile_network(layers, test[0], budget, raella)
    results = [
        _run_setup(ISAAC, isaac_layers, acts, ISAAC_CONFIG, rec_only, seed),
        _run_setup(CENTER_OFFSET, co_layers, acts, raella, rec_only, seed),
        _run_setup(ADAPTIVE, aws_layers, acts, raella, rec_only, seed),
        _run_setup(SPECULATIVE, aws_layers, acts, raella, spec, seed),
    ]
    return results, column_sum_ladder(layers, acts, aws_layers, raella.rows, spec_widths)


def column_sum_ladder(layers, acts, compiled, rows: int, spec_widths=(4, 2, 2)) -> dict:
    """Raw column-sum distributions as each technique is added.

    Starts from unsigned weights with 4b weight and input slices and ends
    with the 1b recovery input slices of the compiled network.
    """
    sums = {k: [] for k in LADDER}
    four = Slicing(FOUR_BIT)
    for i, (layer, c) in enumerate(zip(layers, compiled)):
        w = layer.weight_matrix()
        x = acts[i]
        zero = solve_centers(w, four, rows, UNSIGNED)
        co = solve_centers(w, four, rows, CENTER)
        sums["unsigned"].append(raw_column_sums(layer, x, four, zero, rows, FOUR_BIT))
        sums["center_offset"].append(raw_column_sums(layer, x, four, co, rows, FOUR_BIT))
        sums["adaptive_weight_slicing"].append(
            raw_column_sums(layer, x, c.slicing, c.centers, rows, FOUR_BIT))
        sums["speculation"].append(
            raw_column_sums(layer, x, c.slicing, c.centers, rows, tuple(spec_widths)))
        sums["recovery"].append(raw_column_sums(layer, x, c.slicing, c.centers, rows, (1,) * 8))
    return histogram_report({k: np.concatenate(v) for k, v in sums.items()})


@dataclass
class NoisePoint:
    noise_level: float
    layer: str
    slicing: Slicing
    error: float
    fallback: bool
    saturations: int


def noise_sweep(layers: list[LayerSpec], inputs: np.ndarray, levels, budget: float = 0.09,
                seed: int = 0, test_inputs: int = 10,
                plan: InputPlan | None = None) -> list[NoisePoint]:
    """Recompile noise-aware at each level, then measure per-layer error under that noise."""
    inputs = np.asarray(inputs)
    if inputs.shape[0] == 0:
        raise ValueError("noise sweep needs at least one input sample")
    plan = plan or InputPlan()
    acts = run_network(layers, inputs)
    test = acts[0][:test_inputs]
    out = []
    for e in levels:
        cfg = CrossbarConfig(noise_level=float(e), rng_seed=seed)
        compiled = compile_network(layers, test, budget, cfg)
        for i, c in enumerate(compiled):
            r = simulate_layer(c.spec, acts[i], c.slicing, c.centers, cfg, plan, layer_index=i)
            out.append(NoisePoint(float(e), c.name, c.slicing,
                                  layer_error(acts[i + 1], r.outputs), c.fallback,
                                  r.metrics.total_saturations))
    return out
