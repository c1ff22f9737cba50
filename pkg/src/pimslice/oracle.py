"""Exact integer reference for FC and convolution layers.

This is the ground truth that slicing errors and simulator fidelity are
measured against.
"""

from __future__ import annotations

import numpy as np

from .layers import CONVOLUTION, LayerSpec, quantize_outputs

PSUM16_MIN, PSUM16_MAX = -(1 << 15), (1 << 15) - 1


def im2col(inputs: np.ndarray, kernel, stride=1, padding=0) -> np.ndarray:
    """Unroll ``(N, C, H, W)`` patches into a ``(C*kh*kw, N*Ho*Wo)`` matrix.

    Row order matches ``weights.reshape(F, -1)`` for ``(F, C, kh, kw)`` kernels;
    columns run over (n, out_y, out_x). Zero padding is applied.
    """
    x = np.asarray(inputs)
    if x.ndim == 3:
        x = x[None]
    if x.ndim != 4:
        raise ValueError(f"im2col expects (N, C, H, W) inputs, got shape {x.shape}")
    kh, kw = (kernel, kernel) if np.ndim(kernel) == 0 else kernel
    sh, sw = (stride, stride) if np.ndim(stride) == 0 else stride
    ph, pw = (padding, padding) if np.ndim(padding) == 0 else padding
    if min(kh, kw, sh, sw) < 1 or min(ph, pw) < 0:
        raise ValueError("invalid kernel/stride/padding")
    n, c, h, w = x.shape
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (w + 2 * pw - kw) // sw + 1
    if ho < 1 or wo < 1:
        raise ValueError("kernel does not fit the padded input")
    xp = np.pad(x.astype(np.int64), ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    cols = np.empty((c, kh, kw, n, ho, wo), dtype=np.int64)
    for i in range(kh):
        for j in range(kw):
            cols[:, i, j] = xp[:, :, i:i + sh * ho:sh, j:j + sw * wo:sw].transpose(1, 0, 2, 3)
    return cols.reshape(c * kh * kw, n * ho * wo)


def lower_inputs(layer: LayerSpec, inputs: np.ndarray) -> tuple[np.ndarray, tuple[int, ...]]:
    """Inputs as a ``(positions, fan_in)`` matrix plus the output tensor shape."""
    x = np.asarray(inputs)
    lo, hi = (-128, 127) if layer.input_signed else (0, 255)
    if x.size and (x.min() < lo or x.max() > hi):
        raise ValueError(f"{layer.name}: inputs outside [{lo}, {hi}]")
    x = x.astype(np.int64)
    if layer.kind == CONVOLUTION:
        if x.ndim == 3:
            x = x[None]
        if x.ndim != 4 or x.shape[1] != layer.weights.shape[1]:
            raise ValueError(f"{layer.name}: expected (N, {layer.weights.shape[1]}, H, W) "
                             f"inputs, got {x.shape}")
        ho, wo = layer.output_hw(x.shape[2], x.shape[3])
        cols = im2col(x, layer.kernel, layer.stride, layer.padding)
        return cols.T, (x.shape[0], layer.n_filters, ho, wo)
    if x.ndim == 1:
        x = x[None]
    x = x.reshape(x.shape[0], -1)
    if x.shape[1] != layer.fan_in:
        raise ValueError(f"{layer.name}: expected {layer.fan_in} inputs per sample, "
                         f"got {x.shape[1]}")
    return x, (x.shape[0], layer.n_filters)


def raise_outputs(values: np.ndarray, out_shape: tuple[int, ...]) -> np.ndarray:
    """Inverse of the position layout: ``(positions, F)`` back to the output tensor."""
    if len(out_shape) == 4:
        n, f, ho, wo = out_shape
        return values.reshape(n, ho, wo, f).transpose(0, 3, 1, 2)
    return values.reshape(out_shape)


def ideal_psums_matrix(layer: LayerSpec, x: np.ndarray) -> np.ndarray:
    w = layer.signed_weight_matrix()
    psums = x @ w.T
    if psums.size and (psums.min() < -(1 << 31) or psums.max() >= (1 << 31)):
        raise OverflowError(f"{layer.name}: psums overflow 32 bits; layer spec is malformed")
    return psums


def ideal_layer(layer: LayerSpec, inputs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact psums (int32) and quantized 8b outputs for one layer."""
    x, out_shape = lower_inputs(layer, inputs)
    psums = ideal_psums_matrix(layer, x)
    outs = quantize_outputs(psums, layer.quant)
    return (raise_outputs(psums, out_shape).astype(np.int32),
            raise_outputs(outs, out_shape))


def psum16_overflows(psums: np.ndarray) -> int:
    p = np.asarray(psums)
    return int(np.count_nonzero((p < PSUM16_MIN) | (p > PSUM16_MAX)))


def run_network(layers: list[LayerSpec], inputs: np.ndarray) -> list[np.ndarray]:
    """Oracle activations: element k is the input to layer k, the last is the output."""
    acts = [np.asarray(inputs)]
    for layer in layers:
        acts.append(ideal_layer(layer, acts[-1])[1])
    return acts
