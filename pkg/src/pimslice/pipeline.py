"""Layer execution on sliced crossbars with speculative input slicing.

Per input vector and crossbar chunk, every weight-slice column is driven
by input slices, converted by the clamping ADC, and shift+added into the
psum.  The center term and the weight zero-point correction are computed
digitally at full precision.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bitslice import Slicing, slice_signed, unsigned_bit_slices
from .encoder import chunk_bounds
from .layers import LayerSpec, QuantParams, quantize_outputs
from .metrics import RECOVERY, SPECULATION, RunMetrics
from .oracle import lower_inputs, psum16_overflows, raise_outputs
from .xbar import CrossbarConfig, adc_convert, cycle_rng

__all__ = ["InputPlan", "LayerResult", "QuantParams", "quantize_outputs", "input_sum_term",
           "split_signed_inputs", "count_converts", "simulate_layer", "run_layer",
           "raw_column_sums"]

RECOVERY_WIDTHS = (1,) * 8
_PHASE_KEY = {SPECULATION: 0, RECOVERY: 1}


@dataclass(frozen=True)
class InputPlan:
    """Speculative input slicing; failed slices are redone as 1b slices."""

    speculative_widths: tuple[int, ...] = (4, 2, 2)
    speculation_enabled: bool = True

    def __post_init__(self):
        widths = tuple(int(w) for w in self.speculative_widths)
        object.__setattr__(self, "speculative_widths", widths)
        if sum(widths) != 8 or any(not 2 <= w <= 4 for w in widths):
            raise ValueError(f"speculative widths must each lie in [2, 4] and sum to 8: {widths}")

    @classmethod
    def recovery_only(cls) -> "InputPlan":
        return cls(speculation_enabled=False)

    @property
    def recovery_widths(self) -> tuple[int, ...]:
        return RECOVERY_WIDTHS

    @property
    def cycles_per_pass(self) -> int:
        n = len(self.recovery_widths)
        return n + len(self.speculative_widths) if self.speculation_enabled else n

    def recovery_owner(self) -> np.ndarray:
        """Speculative slice index that each 1b recovery slice belongs to (MSB first)."""
        return np.repeat(np.arange(len(self.speculative_widths)), self.speculative_widths)


def input_sum_term(inputs, center: int) -> int:
    return int(center) * int(np.asarray(inputs, dtype=np.int64).sum())


def split_signed_inputs(inputs) -> tuple[np.ndarray, np.ndarray]:
    """Positive-cycle and negative-cycle magnitudes of signed inputs."""
    x = np.asarray(inputs, dtype=np.int64)
    return np.maximum(x, 0), np.maximum(-x, 0)


def count_converts(flags, plan: InputPlan) -> np.ndarray:
    """ADC converts per column from per-slice speculation success flags.

    ``flags[..., s]`` is True when speculative slice ``s`` succeeded.
    Without speculation every column takes one convert per 1b slice.
    """
    if not plan.speculation_enabled:
        return np.full(np.shape(flags)[:-1], len(plan.recovery_widths), dtype=np.int64)
    ok = np.asarray(flags, dtype=bool)
    widths = np.asarray(plan.speculative_widths)
    return len(widths) + ((~ok) * widths).sum(axis=-1)


@dataclass
class LayerResult:
    outputs: np.ndarray
    psums: np.ndarray
    metrics: RunMetrics
    traces: dict | None = None
    converts_per_column: np.ndarray | None = None


@dataclass
class _ChunkOut:
    psum: np.ndarray
    metrics: RunMetrics
    converts: np.ndarray
    traces: list = field(default_factory=list)


def _crossbar_sums(x_slices: np.ndarray, s_pos: np.ndarray, s_neg: np.ndarray):
    """``x_slices`` (T, P, K) against slice matrices (K, J*F) -> N+, N- as (T, P, J*F)."""
    t, p, k = x_slices.shape
    xf = x_slices.reshape(t * p, k).astype(np.float64)
    npos = np.rint(xf @ s_pos).astype(np.int64).reshape(t, p, -1)
    nneg = np.rint(xf @ s_neg).astype(np.int64).reshape(t, p, -1)
    return npos, nneg


def _convert_cycles(npos, nneg, config: CrossbarConfig, key: tuple, phase: str):
    raw = npos - nneg
    if config.noise_level > 0:
        noisy = np.empty(raw.shape, dtype=np.float64)
        sigma = config.noise_level * np.sqrt((npos + nneg).astype(np.float64))
        for t in range(raw.shape[0]):
            rng = cycle_rng(config.rng_seed, *key, _PHASE_KEY[phase], t)
            noisy[t] = raw[t] + sigma[t] * rng.standard_normal(raw[t].shape)
    else:
        noisy = raw
    adc, sat = adc_convert(noisy, config)
    return raw, noisy, adc, sat


def _simulate_chunk(xc: np.ndarray, slices: np.ndarray, centers: np.ndarray,
                    slicing: Slicing, config: CrossbarConfig, plan: InputPlan,
                    key: tuple, want_traces: bool) -> _ChunkOut:
    """One crossbar chunk for non-negative inputs ``xc`` (P, Kc).

    ``slices`` is (J, F, Kc) signed weight slices; returns the chunk psum
    (center term included) as (P, F).
    """
    n_slices, n_filters, kc = slices.shape
    n_pos = xc.shape[0]
    m = RunMetrics()
    s_mat = slices.transpose(2, 0, 1).reshape(kc, n_slices * n_filters).astype(np.float64)
    s_pos, s_neg = np.maximum(s_mat, 0), np.maximum(-s_mat, 0)
    lo, hi = config.adc_min, config.adc_max
    traces = []

    rec_x = unsigned_bit_slices(xc, plan.recovery_widths)
    rpos, rneg = _crossbar_sums(rec_x, s_pos, s_neg)
    rraw, rnoisy, radc, rsat = _convert_cycles(rpos, rneg, config, key, RECOVERY)
    m.record_colsums(RECOVERY, rraw, lo, hi)
    rec_shift = np.array([1 << l for l in Slicing(plan.recovery_widths).lows], dtype=np.int64)

    if plan.speculation_enabled:
        spec_x = unsigned_bit_slices(xc, plan.speculative_widths)
        spos, sneg = _crossbar_sums(spec_x, s_pos, s_neg)
        sraw, snoisy, sadc, ssat = _convert_cycles(spos, sneg, config, key, SPECULATION)
        m.record_colsums(SPECULATION, sraw, lo, hi)
        spec_shift = np.array([1 << l for l in Slicing(plan.speculative_widths).lows],
                              dtype=np.int64)
        owner = plan.recovery_owner()
        redo = ssat[owner]  # (8, P, J*F): recovery cycle counts only where speculation failed
        committed = ((np.where(ssat, 0, sadc) * spec_shift[:, None, None]).sum(0)
                     + (np.where(redo, radc, 0) * rec_shift[:, None, None]).sum(0))
        converts = count_converts(np.moveaxis(~ssat, 0, -1), plan)
        m.conversions[SPECULATION] += ssat.size
        m.saturations[SPECULATION] += int(ssat.sum())
        m.conversions[RECOVERY] += int(redo.sum())
        m.saturations[RECOVERY] += int((rsat & redo).sum())
        if want_traces:
            traces.append((SPECULATION, sraw, spos, sneg, snoisy, sadc, ssat, ~ssat))
            traces.append((RECOVERY, rraw, rpos, rneg, rnoisy, radc, rsat, redo))
    else:
        committed = (radc * rec_shift[:, None, None]).sum(0)
        converts = np.full(committed.shape, len(plan.recovery_widths), dtype=np.int64)
        m.conversions[RECOVERY] += rsat.size
        m.saturations[RECOVERY] += int(rsat.sum())
        if want_traces:
            traces.append((RECOVERY, rraw, rpos, rneg, rnoisy, radc, rsat,
                           np.ones(rsat.shape, dtype=bool)))

    committed = committed.reshape(n_pos, n_slices, n_filters)
    w_shift = np.array([1 << l for l in slicing.lows], dtype=np.int64)
    analog = (committed * w_shift[None, :, None]).sum(1)
    center_term = xc.sum(1)[:, None] * centers[None, :]
    m.total_adc_converts += int(converts.sum())
    m.columns += converts.size
    m.cycles += n_pos * plan.cycles_per_pass
    return _ChunkOut(center_term + analog, m, converts.reshape(n_pos, n_slices, n_filters),
                     traces)


def _trace_records(traces, chunk: int, sign: int, n_slices: int, n_filters: int) -> np.ndarray:
    recs = []
    for phase, raw, npos, nneg, noisy, adc, sat, committed in traces:
        t, p, jf = raw.shape
        idx = np.indices((t, p, n_slices, n_filters)).reshape(4, -1)
        rec = np.zeros(idx.shape[1], dtype=TRACE_DTYPE)
        rec["chunk"], rec["sign"] = chunk, sign
        rec["phase"] = _PHASE_KEY[phase]
        rec["cycle"], rec["position"], rec["slice"], rec["filter"] = idx
        rec["raw_sum"] = raw.ravel()
        rec["pos_total"], rec["neg_total"] = npos.ravel(), nneg.ravel()
        rec["noisy_sum"] = np.asarray(noisy, dtype=np.float64).ravel()
        rec["adc_out"], rec["saturated"] = adc.ravel(), sat.ravel()
        rec["committed"] = committed.ravel()
        recs.append(rec)
    return np.concatenate(recs) if recs else np.zeros(0, dtype=TRACE_DTYPE)


TRACE_DTYPE = np.dtype([
    ("chunk", "i4"), ("sign", "i1"), ("phase", "i1"), ("cycle", "i2"), ("position", "i8"),
    ("slice", "i2"), ("filter", "i4"), ("raw_sum", "i8"), ("pos_total", "i8"),
    ("neg_total", "i8"), ("noisy_sum", "f8"), ("adc_out", "i8"), ("saturated", "?"),
    ("committed", "?"),
])


def simulate_layer(layer: LayerSpec, inputs: np.ndarray, slicing: Slicing,
                   centers: np.ndarray, config: CrossbarConfig, plan: InputPlan,
                   layer_index: int = 0, emit_traces: bool = False,
                   jobs: int = 1) -> LayerResult:
    """Run ``layer`` on crossbars holding ``slicing``/``centers`` encoded offsets."""
    x, out_shape = lower_inputs(layer, inputs)
    weights = layer.weight_matrix()
    bounds = chunk_bounds(weights.shape[1], config.rows)
    centers = np.asarray(centers, dtype=np.int64)
    if centers.shape != (layer.n_filters, len(bounds)):
        raise ValueError(f"{layer.name}: centers shaped {centers.shape} do not match "
                         f"{layer.n_filters} filters x {len(bounds)} chunks of {config.rows} rows")
    if max(plan.speculative_widths) > config.dac_max_bits and plan.speculation_enabled:
        raise ValueError("speculative input slices exceed the DAC resolution")

    passes = list(enumerate(split_signed_inputs(x))) if layer.input_signed else [(0, x)]
    tasks = []
    for sign, xs in passes:
        for c, (lo, hi) in enumerate(bounds):
            d = weights[:, lo:hi] - centers[:, c:c + 1]
            slices = np.stack([slice_signed(h, l, d) for h, l in slicing.ranges])
            tasks.append((sign, c, xs[:, lo:hi], slices, centers[:, c]))

    def work(task):
        sign, c, xc, slices, cen = task
        return _simulate_chunk(xc, slices, cen, slicing, config, plan,
                               (layer_index, c, sign), emit_traces)

    if jobs > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, tasks))
    else:
        results = [work(t) for t in tasks]

    metrics = RunMetrics()
    psum = np.zeros((x.shape[0], layer.n_filters), dtype=np.int64)
    trace_parts = []
    for (sign, c, *_), r in zip(tasks, results):
        psum += -r.psum if sign else r.psum
        metrics.merge(r.metrics)
        if emit_traces:
            trace_parts.append(_trace_records(r.traces, c, sign, len(slicing), layer.n_filters))
    psum -= layer.weight_zero_point * x.sum(1)[:, None]

    metrics.total_macs += x.shape[0] * layer.n_filters * weights.shape[1]
    metrics.live_rows += weights.shape[1]
    metrics.allocated_rows += len(bounds) * config.rows
    metrics.psum16_overflows += psum16_overflows(psum)
    outputs = quantize_outputs(psum, layer.quant)
    converts = np.stack([r.converts for r in results]) if results else None
    traces = None
    if emit_traces:
        traces = np.concatenate(trace_parts) if trace_parts else np.zeros(0, TRACE_DTYPE)
    return LayerResult(raise_outputs(outputs, out_shape), raise_outputs(psum, out_shape),
                       metrics, traces, converts)


def run_layer(layer, inputs: np.ndarray, config: CrossbarConfig, plan: InputPlan,
              layer_index: int = 0, emit_traces: bool = False, jobs: int = 1):
    """Simulate a compiled layer; returns ``(outputs, metrics, traces)``."""
    if layer.rows != config.rows:
        raise ValueError(f"{layer.name}: compiled for {layer.rows}-row crossbars, "
                         f"config has {config.rows}")
    r = simulate_layer(layer.spec, inputs, layer.slicing, layer.centers, config, plan,
                       layer_index=layer_index, emit_traces=emit_traces, jobs=jobs)
    return r.outputs, r.metrics, r.traces


def raw_column_sums(layer: LayerSpec, inputs: np.ndarray, slicing: Slicing,
                    centers: np.ndarray, rows: int, input_widths) -> np.ndarray:
    """Noise-free raw column sums for a static input slicing, flattened.

    Used for distribution studies where no ADC or recovery is involved.
    """
    x, _ = lower_inputs(layer, inputs)
    weights = layer.weight_matrix()
    passes = split_signed_inputs(x) if layer.input_signed else (x,)
    out = []
    for xs in passes:
        for c, (lo, hi) in enumerate(chunk_bounds(weights.shape[1], rows)):
            d = weights[:, lo:hi] - np.asarray(centers)[:, c:c + 1]
            s = np.stack([slice_signed(h, l, d) for h, l in slicing.ranges])
            s_mat = s.transpose(2, 0, 1).reshape(hi - lo, -1).astype(np.float64)
            xsl = unsigned_bit_slices(xs[:, lo:hi], input_widths)
            npos, nneg = _crossbar_sums(xsl, np.maximum(s_mat, 0), np.maximum(-s_mat, 0))
            out.append((npos - nneg).ravel())
    return np.concatenate(out)
