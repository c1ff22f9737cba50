"""ADC energy accounting (the four-term energy law) and column-sum statistics."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

SPECULATION = "speculation"
RECOVERY = "recovery"
PHASES = (SPECULATION, RECOVERY)

HIST_BINS = 64

METRICS_COLUMNS = ("setup", "layer", "converts", "macs", "converts_per_mac",
                   "spec_saturation_rate", "recovery_saturation_rate", "cycles",
                   "utilization")


def signed_bitwidth(value):
    """Minimal two's-complement width holding ``value`` (0 needs 1 bit)."""
    if isinstance(value, np.ndarray):
        v = value.astype(np.int64)
        mag = np.where(v < 0, -v - 1, v)
        return np.frexp(mag.astype(np.float64))[1].astype(np.int64) + 1
    v = int(value)
    return (v if v >= 0 else -v - 1).bit_length() + 1


@dataclass
class RunMetrics:
    total_adc_converts: int = 0
    total_macs: int = 0
    live_rows: int = 0
    allocated_rows: int = 0
    cycles: int = 0
    columns: int = 0  # column passes: (input vector, chunk, filter, weight slice, sign pass)
    conversions: dict = field(default_factory=lambda: {p: 0 for p in PHASES})
    saturations: dict = field(default_factory=lambda: {p: 0 for p in PHASES})
    colsum_total: dict = field(default_factory=lambda: {p: 0 for p in PHASES})
    colsum_out_of_range: dict = field(default_factory=lambda: {p: 0 for p in PHASES})
    colsum_histogram: dict = field(
        default_factory=lambda: {p: np.zeros(HIST_BINS, dtype=np.int64) for p in PHASES})
    psum16_overflows: int = 0

    @property
    def utilization(self) -> float:
        return self.live_rows / self.allocated_rows if self.allocated_rows else 1.0

    @property
    def saturation_counts(self) -> dict:
        return dict(self.saturations)

    @property
    def total_saturations(self) -> int:
        return sum(self.saturations.values())

    def saturation_rate(self, phase: str) -> float:
        n = self.conversions[phase]
        return self.saturations[phase] / n if n else float("nan")

    def raw_saturation_rate(self, phase: str) -> float:
        n = self.colsum_total[phase]
        return self.colsum_out_of_range[phase] / n if n else float("nan")

    @property
    def converts_per_column(self) -> float:
        return self.total_adc_converts / self.columns if self.columns else float("nan")

    @property
    def converts_per_mac(self) -> float:
        """The energy-law term: converts per MAC at full row utilization."""
        if not self.total_macs:
            return float("nan")
        return self.total_adc_converts * self.utilization / self.total_macs

    def record_colsums(self, phase: str, raw: np.ndarray, lo: int, hi: int):
        raw = np.asarray(raw)
        self.colsum_total[phase] += raw.size
        self.colsum_out_of_range[phase] += int(np.count_nonzero((raw < lo) | (raw > hi)))
        bw = np.minimum(signed_bitwidth(raw.ravel()), HIST_BINS - 1)
        self.colsum_histogram[phase] += np.bincount(bw, minlength=HIST_BINS)

    def merge(self, other: "RunMetrics") -> "RunMetrics":
        """Add ``other`` into ``self`` (associative); returns ``self``."""
        for name in ("total_adc_converts", "total_macs", "live_rows", "allocated_rows",
                     "cycles", "columns", "psum16_overflows"):
            setattr(self, name, getattr(self, name) + getattr(other, name))
        for name in ("conversions", "saturations", "colsum_total", "colsum_out_of_range"):
            mine, theirs = getattr(self, name), getattr(other, name)
            for p in PHASES:
                mine[p] += theirs[p]
        for p in PHASES:
            self.colsum_histogram[p] = self.colsum_histogram[p] + other.colsum_histogram[p]
        return self

    def histogram_dict(self, phase: str) -> dict[int, int]:
        h = self.colsum_histogram[phase]
        return {int(b): int(h[b]) for b in np.nonzero(h)[0]}

    def row(self, setup: str, layer: str) -> dict:
        return {
            "setup": setup,
            "layer": layer,
            "converts": self.total_adc_converts,
            "macs": self.total_macs,
            "converts_per_mac": _fmt(self.converts_per_mac),
            "spec_saturation_rate": _fmt(self.saturation_rate(SPECULATION)),
            "recovery_saturation_rate": _fmt(self.saturation_rate(RECOVERY)),
            "cycles": self.cycles,
            "utilization": _fmt(self.utilization),
        }


def _fmt(x: float) -> str:
    return "nan" if isinstance(x, float) and math.isnan(x) else f"{x:.6g}"


def write_metrics_csv(rows: list[dict], fh) -> None:
    writer = csv.DictWriter(fh, fieldnames=METRICS_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow(r)


def converts_per_mac(rows: int, weight_slices: int, input_converts_per_pass: float) -> float:
    """ADC converts per 8b MAC for a fully used crossbar."""
    if rows <= 0 or weight_slices <= 0 or input_converts_per_pass <= 0:
        raise ValueError("rows, weight slices and converts per pass must be positive")
    return weight_slices * input_converts_per_pass / rows


def energy_per_convert(adc_bits: int, reference_bits: int = 8, growth: float = 2.0) -> float:
    """Relative ADC energy per convert, exponential in resolution and 1.0 at the reference."""
    return growth ** (adc_bits - reference_bits)


def titanium_energy(energy_per_convert: float, converts_per_mac: float, macs: float,
                    utilization: float) -> float:
    """ADC energy = Energy/Convert x Converts/MAC x MACs x 1/Utilization."""
    if not 0 < utilization <= 1:
        raise ValueError("utilization must lie in (0, 1]")
    return energy_per_convert * converts_per_mac * macs / utilization


def histogram_report(traces, lo: int = -64, hi: int = 63) -> dict:
    """Per-phase bit-width histograms and out-of-range rates of raw column sums.

    ``traces`` is a :class:`RunMetrics`, a mapping ``phase -> raw sums`` or an
    iterable of objects with ``raw_sum`` (treated as a single phase).
    """
    if isinstance(traces, RunMetrics):
        return {p: {"histogram": traces.histogram_dict(p),
                    "count": traces.colsum_total[p],
                    "saturation_rate": traces.raw_saturation_rate(p)}
                for p in PHASES if traces.colsum_total[p]}
    if not isinstance(traces, dict):
        traces = {"all": [t.raw_sum for t in traces]}
    out = {}
    for phase, raw in traces.items():
        raw = np.asarray(raw, dtype=np.int64).ravel()
        bw = signed_bitwidth(raw)
        vals, counts = np.unique(bw, return_counts=True)
        out[phase] = {
            "histogram": {int(v): int(c) for v, c in zip(vals, counts)},
            "count": int(raw.size),
            "saturation_rate": float(np.mean((raw < lo) | (raw > hi))) if raw.size else float("nan"),
        }
    return out


def histogram_csv(report: dict) -> str:
    """Long-form CSV: phase, bitwidth, count, fraction, saturation_rate."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["phase", "bitwidth", "count", "fraction", "saturation_rate"])
    for phase, rec in report.items():
        total = rec["count"] or 1
        for bw in sorted(rec["histogram"]):
            c = rec["histogram"][bw]
            w.writerow([phase, bw, c, _fmt(c / total), _fmt(rec["saturation_rate"])])
    return buf.getvalue()
