"""Functional model of crossbar column sums and the clamping ADC."""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class CrossbarConfig:
    rows: int = 512
    adc_bits: int = 7
    adc_signed: bool = True
    dac_max_bits: int = 4
    noise_level: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.rows < 1:
            raise ValueError("rows must be >= 1")
        if self.adc_bits < 1:
            raise ValueError("adc_bits must be >= 1")
        if not 1 <= self.dac_max_bits <= 4:
            raise ValueError("dac_max_bits must lie in [1, 4]")
        if self.noise_level < 0:
            raise ValueError("noise level must be non-negative")

    @property
    def adc_min(self) -> int:
        return -(1 << (self.adc_bits - 1)) if self.adc_signed else 0

    @property
    def adc_max(self) -> int:
        if self.adc_signed:
            return (1 << (self.adc_bits - 1)) - 1
        return (1 << self.adc_bits) - 1

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ColumnTrace:
    raw_sum: int
    pos_total: int
    neg_total: int
    noisy_sum: float
    adc_out: int
    saturated: bool


def column_sum(input_slices: Sequence[int], column: Sequence[int],
               dac_max_bits: int = 4, weight_bits: int = 4) -> tuple[int, int, int]:
    """Analog sum of one column for one cycle: ``(raw, N+, N-)``."""
    x = np.asarray(input_slices, dtype=np.int64)
    w = np.asarray([getattr(c, "value", c) for c in column], dtype=np.int64)
    if x.shape != w.shape or x.ndim != 1:
        raise ValueError(f"input/column length mismatch: {x.shape} vs {w.shape}")
    if np.any(x < 0) or np.any(x >= (1 << dac_max_bits)):
        raise ValueError(f"input slices must lie in [0, {(1 << dac_max_bits) - 1}]")
    if np.any(np.abs(w) >= (1 << weight_bits)):
        raise ValueError(f"weight slices must fit {weight_bits}b magnitudes")
    npos = int(x @ np.maximum(w, 0))
    nneg = int(x @ np.maximum(-w, 0))
    return npos - nneg, npos, nneg


def inject_noise(raw_sum, pos_total, neg_total, noise_level: float,
                 rng: np.random.Generator | None = None):
    """Gaussian column-sum noise with sigma = E * sqrt(N+ + N-).

    Returns ``raw_sum`` untouched when the noise level is zero. Array
    arguments draw one sample per element, in C order.
    """
    if noise_level < 0:
        raise ValueError("noise level must be non-negative")
    if noise_level == 0:
        return raw_sum
    if rng is None:
        raise ValueError("a generator is required for non-zero noise")
    sigma = noise_level * np.sqrt(np.asarray(pos_total, dtype=np.float64)
                                  + np.asarray(neg_total, dtype=np.float64))
    out = np.asarray(raw_sum, dtype=np.float64) + sigma * rng.standard_normal(np.shape(sigma))
    return float(out) if np.ndim(out) == 0 else out


def round_half_away(x):
    """Round to nearest integer, ties away from zero."""
    if isinstance(x, np.ndarray):
        if np.issubdtype(x.dtype, np.integer):
            return x.astype(np.int64)
        return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(np.int64)
    if isinstance(x, (int, np.integer)):
        return int(x)
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def adc_convert(value, config: CrossbarConfig) -> tuple:
    """Round and clamp to the ADC range; an output at either bound counts as saturated.

    Step size is one LSB, so in-range integer sums pass through unchanged.
    Accepts scalars or arrays.
    """
    q = round_half_away(value)
    if isinstance(q, np.ndarray):
        out = np.clip(q, config.adc_min, config.adc_max)
        return out, (out == config.adc_min) | (out == config.adc_max)
    out = min(max(q, config.adc_min), config.adc_max)
    return out, out in (config.adc_min, config.adc_max)


def simulate_column(input_slices, column, config: CrossbarConfig,
                    rng: np.random.Generator | None = None,
                    weight_bits: int = 4) -> ColumnTrace:
    raw, npos, nneg = column_sum(input_slices, column, config.dac_max_bits, weight_bits)
    noisy = inject_noise(raw, npos, nneg, config.noise_level, rng)
    out, sat = adc_convert(noisy, config)
    return ColumnTrace(raw, npos, nneg, float(noisy), int(out), bool(sat))


def cycle_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent stream for one (layer, chunk, phase, cycle, ...) key."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, key)]))
