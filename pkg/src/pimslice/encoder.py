"""Center+Offset weight encoding.

Each weight filter chunk (the weights of one dot product that share a
crossbar) gets an integer center.  The crossbar stores only the signed
offsets ``w - center``; the center term is added back digitally.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .bitslice import Slicing, SignedSlice, slice_signed

CENTER_CANDIDATES = np.arange(1, 256, dtype=np.int64)

# How centers are chosen for a layer.
CENTER = "center"        # solve the balancing cost per filter chunk
ZERO = "zero"            # differential encoding: center at the weight zero-point
UNSIGNED = "unsigned"    # no center at all; offsets are the raw unsigned weights
CENTER_MODES = (CENTER, ZERO, UNSIGNED)


@dataclass
class FilterChunk:
    weights: np.ndarray
    filter_id: int | str = 0
    chunk_index: int = 0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.int64).ravel()
        if self.weights.size < 1:
            raise ValueError("a filter chunk needs at least one weight")
        if self.weights.min() < 0 or self.weights.max() > 255:
            raise ValueError("chunk weights must be unsigned 8b values")


@dataclass
class EncodedFilter:
    center: int
    pos_offsets: np.ndarray
    neg_offsets: np.ndarray
    slicing: Slicing
    # one signed vector per weight slice, most significant first
    slice_columns: list[np.ndarray] = field(default_factory=list)

    def column(self, i: int) -> list[SignedSlice]:
        low = self.slicing.lows[i]
        return [SignedSlice(int(v), low) for v in self.slice_columns[i]]

    def decode(self) -> np.ndarray:
        acc = np.full(self.pos_offsets.shape, self.center, dtype=np.int64)
        for col, low in zip(self.slice_columns, self.slicing.lows):
            acc += col << low
        return acc


def offsets(w, center):
    """Positive and negative offsets of ``w`` about ``center``; one is always zero."""
    if isinstance(w, np.ndarray):
        d = w.astype(np.int64) - center
        return np.maximum(d, 0), np.maximum(-d, 0)
    return max(w - center, 0), max(center - w, 0)


def _chunk_weights(chunk) -> np.ndarray:
    if isinstance(chunk, FilterChunk):
        return chunk.weights
    return FilterChunk(chunk).weights


def column_cost(chunk, center: int, slicing: Slicing) -> int:
    """Balancing cost of one center: sum over slices of 2^low * (column sum)^4."""
    d = _chunk_weights(chunk) - int(center)
    total = 0
    for h, l in slicing.ranges:
        s = int(slice_signed(h, l, d).sum())
        total += (s ** 4) << l
    return total


@lru_cache(maxsize=None)
def _slice_table(h: int, l: int) -> np.ndarray:
    """D(h, l, v - phi) for phi in 1..255 (rows) and v in 0..255 (columns)."""
    v = np.arange(256, dtype=np.int64)
    table = slice_signed(h, l, v[None, :] - CENTER_CANDIDATES[:, None])
    table.setflags(write=False)
    return table


def weight_histograms(weights: np.ndarray) -> np.ndarray:
    """Per-row counts of each 8b weight value; ``(F, K) -> (F, 256)``."""
    w = np.asarray(weights, dtype=np.int64)
    w = w.reshape(-1, w.shape[-1])
    offs = (np.arange(w.shape[0])[:, None] * 256 + w).ravel()
    return np.bincount(offs, minlength=w.shape[0] * 256).reshape(w.shape[0], 256)


def center_costs(hists: np.ndarray, slicing: Slicing) -> np.ndarray:
    """Cost of every candidate center for each histogram row; shape (F, 255)."""
    hists = np.asarray(hists, dtype=np.int64)
    exact = hists.sum(axis=1).max(initial=0) > 1024
    total = np.zeros((hists.shape[0], CENTER_CANDIDATES.size),
                     dtype=object if exact else np.int64)
    for h, l in slicing.ranges:
        sums = hists @ _slice_table(h, l).T
        if exact:
            sums = sums.astype(object)
        total = total + (sums ** 4) * (1 << l)
    return total


def solve_center(chunk, slicing: Slicing) -> int:
    """Exhaustive search over centers 1..255; smallest center wins ties."""
    costs = center_costs(weight_histograms(_chunk_weights(chunk)[None, :]), slicing)[0]
    return int(CENTER_CANDIDATES[int(np.argmin(costs))])


def chunk_bounds(n_weights: int, rows: int) -> list[tuple[int, int]]:
    """Row ranges of the crossbar chunks a filter of ``n_weights`` is split into."""
    if rows < 1:
        raise ValueError("rows must be positive")
    return [(s, min(s + rows, n_weights)) for s in range(0, n_weights, rows)]


def solve_centers(weights: np.ndarray, slicing: Slicing, rows: int,
                  mode: str = CENTER, zero_point: int = 0) -> np.ndarray:
    """Centers for every (filter, chunk) of a ``(F, K)`` weight matrix."""
    weights = np.asarray(weights, dtype=np.int64)
    bounds = chunk_bounds(weights.shape[1], rows)
    if mode == UNSIGNED:
        return np.zeros((weights.shape[0], len(bounds)), dtype=np.int64)
    if mode == ZERO:
        return np.full((weights.shape[0], len(bounds)), int(zero_point), dtype=np.int64)
    if mode != CENTER:
        raise ValueError(f"unknown center mode {mode!r}")
    out = np.empty((weights.shape[0], len(bounds)), dtype=np.int64)
    for c, (lo, hi) in enumerate(bounds):
        costs = center_costs(weight_histograms(weights[:, lo:hi]), slicing)
        out[:, c] = CENTER_CANDIDATES[np.argmin(costs, axis=1)]
    return out


class CenterSolver:
    """Caches weight histograms so many slicings can be solved for one layer."""

    def __init__(self, weights: np.ndarray, rows: int):
        weights = np.asarray(weights, dtype=np.int64)
        self.bounds = chunk_bounds(weights.shape[1], rows)
        self.hists = [weight_histograms(weights[:, lo:hi]) for lo, hi in self.bounds]
        self.n_filters = weights.shape[0]

    def solve(self, slicing: Slicing) -> np.ndarray:
        out = np.empty((self.n_filters, len(self.bounds)), dtype=np.int64)
        for c, hist in enumerate(self.hists):
            out[:, c] = CENTER_CANDIDATES[np.argmin(center_costs(hist, slicing), axis=1)]
        return out


def encode_filter(chunk, slicing: Slicing, rows: int = 512,
                  center: int | None = None) -> EncodedFilter:
    """Solve (unless given) the center for one chunk and build its slice columns."""
    w = _chunk_weights(chunk)
    if w.size > rows:
        raise ValueError(f"chunk of {w.size} weights exceeds {rows} crossbar rows; "
                         "filters must be partitioned before encoding")
    phi = solve_center(w, slicing) if center is None else int(center)
    pos, neg = offsets(w, phi)
    d = w - phi
    cols = [slice_signed(h, l, d) for h, l in slicing.ranges]
    return EncodedFilter(center=phi, pos_offsets=pos, neg_offsets=neg,
                         slicing=slicing, slice_columns=cols)


def encode_slices(weights: np.ndarray, centers: np.ndarray, slicing: Slicing,
                  rows: int) -> list[np.ndarray]:
    """Signed slice tensors per chunk, each shaped ``(n_slices, F, chunk_rows)``."""
    weights = np.asarray(weights, dtype=np.int64)
    out = []
    for c, (lo, hi) in enumerate(chunk_bounds(weights.shape[1], rows)):
        d = weights[:, lo:hi] - centers[:, c:c + 1]
        out.append(np.stack([slice_signed(h, l, d) for h, l in slicing.ranges]))
    return out


def column_bias(weights: Sequence[int], center: int, slicing: Slicing) -> np.ndarray:
    """Mean slice value in each column; near zero when the center balances well."""
    d = np.asarray(weights, dtype=np.int64) - int(center)
    return np.array([slice_signed(h, l, d).mean() for h, l in slicing.ranges])
