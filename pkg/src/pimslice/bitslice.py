"""Sign-magnitude bit-slicing primitives.

A slicing partitions the bits of an 8b operand into contiguous fields,
most-significant field first.  Slices carry the sign of the operand they
came from, so a negative weight produces only non-positive slice values.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, NamedTuple, Sequence

import numpy as np

OPERAND_BITS = 8
MAX_SLICE_BITS = 4


class SignedSlice(NamedTuple):
    value: int
    bit_index_low: int


@dataclass(frozen=True)
class Slicing:
    """Ordered per-slice bit widths, most-significant slice first."""

    widths: tuple[int, ...]
    operand_bits: int = OPERAND_BITS
    max_bits: int = MAX_SLICE_BITS

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        object.__setattr__(self, "widths", widths)
        if not widths:
            raise ValueError("a slicing needs at least one slice")
        if any(w < 1 or w > self.max_bits for w in widths):
            raise ValueError(f"slice widths must lie in [1, {self.max_bits}]: {widths}")
        if sum(widths) != self.operand_bits:
            raise ValueError(f"slice widths {widths} do not sum to {self.operand_bits}")

    @classmethod
    def parse(cls, text: str | Sequence[int], **kw) -> "Slicing":
        """Build from "4,2,2", "4-2-2" or a sequence of ints."""
        if isinstance(text, str):
            parts = text.replace("-", ",").replace("x", ",").split(",")
            return cls(tuple(int(p) for p in parts if p.strip()), **kw)
        return cls(tuple(text), **kw)

    @classmethod
    def uniform(cls, width: int, operand_bits: int = OPERAND_BITS) -> "Slicing":
        if operand_bits % width:
            raise ValueError(f"{width}b slices do not tile {operand_bits}b")
        return cls((width,) * (operand_bits // width), operand_bits=operand_bits,
                   max_bits=max(width, MAX_SLICE_BITS))

    def __len__(self) -> int:
        return len(self.widths)

    def __iter__(self) -> Iterator[int]:
        return iter(self.widths)

    def __str__(self) -> str:
        return "-".join(str(w) for w in self.widths)

    @property
    def ranges(self) -> list[tuple[int, int]]:
        """Inclusive (high, low) bit index pairs for each slice."""
        out = []
        high = self.operand_bits - 1
        for w in self.widths:
            out.append((high, high - w + 1))
            high -= w
        return out

    @property
    def lows(self) -> list[int]:
        return [low for _, low in self.ranges]


def enumerate_slicings(operand_bits: int = OPERAND_BITS,
                       max_bits: int = MAX_SLICE_BITS) -> list[Slicing]:
    """All compositions of ``operand_bits`` into parts in [1, max_bits].

    Ordered lexicographically by widths, so (1,1,...,1) comes first.
    """
    if operand_bits < 1 or max_bits < 1:
        raise ValueError("operand_bits and max_bits must be positive")
    return [Slicing(w, operand_bits=operand_bits, max_bits=max_bits)
            for w in _compositions(operand_bits, max_bits)]


@lru_cache(maxsize=None)
def _compositions(n: int, max_part: int) -> tuple[tuple[int, ...], ...]:
    if n == 0:
        return ((),)
    out = []
    for first in range(1, min(n, max_part) + 1):
        out.extend((first,) + rest for rest in _compositions(n - first, max_part))
    return tuple(out)


def slice_signed(h, l, x):
    """Crop bits ``h..l`` of ``|x|`` (bit ``l`` becomes the LSB), keeping the sign of ``x``.

    Works on Python ints and on integer numpy arrays.
    """
    if not 0 <= l <= h:
        raise ValueError(f"invalid bit range [{h}..{l}]")
    mask = (1 << (h - l + 1)) - 1
    if isinstance(x, np.ndarray):
        x = x.astype(np.int64, copy=False)
        return np.sign(x) * ((np.abs(x) >> l) & mask)
    x = int(x)
    mag = (abs(x) >> l) & mask
    return -mag if x < 0 else mag


def slice_operand(x: int, slicing: Slicing) -> list[SignedSlice]:
    return [SignedSlice(slice_signed(h, l, x), l) for h, l in slicing.ranges]


def reconstruct(slices: Sequence[SignedSlice]) -> int:
    return sum(int(s.value) << s.bit_index_low for s in slices)


def slice_array(x: np.ndarray, slicing: Slicing) -> np.ndarray:
    """Slice every element; returns shape ``(len(slicing),) + x.shape``."""
    x = np.asarray(x, dtype=np.int64)
    return np.stack([slice_signed(h, l, x) for h, l in slicing.ranges])


def unsigned_bit_slices(x: np.ndarray, widths: Sequence[int]) -> np.ndarray:
    """Slice non-negative values into unsigned fields (input/DAC side)."""
    x = np.asarray(x, dtype=np.int64)
    if np.any(x < 0):
        raise ValueError("input slices require non-negative values")
    s = Slicing(tuple(widths), operand_bits=sum(widths), max_bits=max(widths))
    return np.stack([(x >> l) & ((1 << (h - l + 1)) - 1) for h, l in s.ranges])
