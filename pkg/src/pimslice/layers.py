"""Layer descriptions and per-channel output quantization shared by the oracle and simulator."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .xbar import round_half_away

FULLY_CONNECTED = "fully_connected"
CONVOLUTION = "convolution"
ACTIVATIONS = ("relu", "identity")


@dataclass
class QuantParams:
    scale: np.ndarray
    bias: np.ndarray
    activation: str = "relu"
    output_signed: bool = False

    def __post_init__(self):
        self.scale = np.atleast_1d(np.asarray(self.scale, dtype=np.float64))
        self.bias = np.atleast_1d(np.asarray(self.bias, dtype=np.float64))
        if self.bias.shape != self.scale.shape:
            self.bias = np.broadcast_to(self.bias, self.scale.shape).copy()
        if np.any(self.scale <= 0):
            raise ValueError("quantization scales must be positive")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")

    @property
    def out_range(self) -> tuple[int, int]:
        return (-128, 127) if self.output_signed else (0, 255)

    @property
    def out_dtype(self):
        return np.int8 if self.output_signed else np.uint8


def quantize_outputs(psums, params: QuantParams, channel_axis: int = -1) -> np.ndarray:
    """``clamp(round(psum * scale + bias))`` per output channel, ReLU folded in."""
    p = np.asarray(psums, dtype=np.float64)
    shape = [1] * p.ndim
    if p.ndim:
        shape[channel_axis] = -1
    scale = params.scale.reshape(shape) if p.ndim else params.scale[0]
    bias = params.bias.reshape(shape) if p.ndim else params.bias[0]
    q = round_half_away(np.asarray(p * scale + bias))
    lo, hi = params.out_range
    if params.activation == "relu":
        lo = max(lo, 0)
    return np.clip(q, lo, hi).astype(params.out_dtype)


@dataclass
class LayerSpec:
    """One FC or convolution layer with unsigned 8b weights and a weight zero-point.

    FC weights are ``(out, in)``; convolution weights are ``(out, in_c, kh, kw)``.
    Signed weight values are ``weights - weight_zero_point``.
    """

    name: str
    kind: str
    weights: np.ndarray
    quant: QuantParams
    weight_zero_point: int = 128
    stride: tuple[int, int] = (1, 1)
    padding: tuple[int, int] = (0, 0)
    input_signed: bool = False
    is_last_layer: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.weights = np.asarray(self.weights)
        if self.weights.min(initial=0) < 0 or self.weights.max(initial=0) > 255:
            raise ValueError(f"{self.name}: weights must be unsigned 8b values")
        self.weights = self.weights.astype(np.uint8)
        if self.kind == FULLY_CONNECTED:
            if self.weights.ndim != 2:
                raise ValueError(f"{self.name}: FC weights must be 2-D (out, in)")
        elif self.kind == CONVOLUTION:
            if self.weights.ndim != 4:
                raise ValueError(f"{self.name}: conv weights must be 4-D (out, in, kh, kw)")
        else:
            raise ValueError(f"{self.name}: unknown layer kind {self.kind!r}")
        self.stride = _pair(self.stride)
        self.padding = _pair(self.padding)
        if not 0 <= self.weight_zero_point <= 255:
            raise ValueError(f"{self.name}: weight zero-point must lie in [0, 255]")
        if self.quant.scale.size == 1 and self.n_filters > 1:
            self.quant = QuantParams(np.repeat(self.quant.scale, self.n_filters),
                                     np.repeat(self.quant.bias, self.n_filters),
                                     self.quant.activation, self.quant.output_signed)
        if self.quant.scale.size != self.n_filters:
            raise ValueError(f"{self.name}: {self.quant.scale.size} quantization channels "
                             f"for {self.n_filters} filters")

    @property
    def n_filters(self) -> int:
        return int(self.weights.shape[0])

    @property
    def fan_in(self) -> int:
        return int(np.prod(self.weights.shape[1:]))

    @property
    def kernel(self) -> tuple[int, int]:
        return tuple(self.weights.shape[2:4]) if self.kind == CONVOLUTION else (1, 1)

    def weight_matrix(self) -> np.ndarray:
        """Unsigned weights as ``(filters, fan_in)`` int64."""
        return self.weights.reshape(self.n_filters, -1).astype(np.int64)

    def signed_weight_matrix(self) -> np.ndarray:
        return self.weight_matrix() - self.weight_zero_point

    def output_hw(self, h: int, w: int) -> tuple[int, int]:
        kh, kw = self.kernel
        ho = (h + 2 * self.padding[0] - kh) // self.stride[0] + 1
        wo = (w + 2 * self.padding[1] - kw) // self.stride[1] + 1
        if ho < 1 or wo < 1:
            raise ValueError(f"{self.name}: kernel larger than padded input")
        return ho, wo


def _pair(v) -> tuple[int, int]:
    if np.ndim(v) == 0:
        return (int(v), int(v))
    a, b = v
    return (int(a), int(b))
