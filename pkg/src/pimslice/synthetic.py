"""Synthetic layers and activations with DNN-like value distributions.

Weights follow per-filter bell curves around the zero-point; inputs are
right-skewed and sparse, as post-ReLU activations usually are.
"""

from __future__ import annotations

import numpy as np

from .layers import CONVOLUTION, FULLY_CONNECTED, LayerSpec, QuantParams
from .oracle import ideal_psums_matrix, lower_inputs


def bell_weights(rng: np.random.Generator, shape, zero_point: int = 128,
                 sigma: float = 20.0, filter_shift: float = 4.0) -> np.ndarray:
    """Unsigned 8b weights, Gaussian around ``zero_point`` with a random per-filter mean."""
    shape = tuple(shape)
    shift = rng.normal(0.0, filter_shift, size=(shape[0],) + (1,) * (len(shape) - 1))
    w = np.rint(rng.normal(zero_point + shift, sigma, size=shape))
    return np.clip(w, 0, 255).astype(np.uint8)


def skewed_weights(rng: np.random.Generator, shape, zero_point: int = 128,
                   sigma: float = 14.0, skew: float = -12.0) -> np.ndarray:
    """Bell-curve weights whose mass sits mostly below the zero-point."""
    w = np.rint(rng.normal(zero_point + skew, sigma, size=tuple(shape)))
    return np.clip(w, 0, 255).astype(np.uint8)


def skewed_inputs(rng: np.random.Generator, shape, mean: float = 24.0,
                  zero_fraction: float = 0.5) -> np.ndarray:
    """Right-skewed unsigned 8b activations with a share of exact zeros."""
    x = rng.exponential(mean, size=tuple(shape))
    x[rng.random(size=x.shape) < zero_fraction] = 0
    return np.clip(np.rint(x), 0, 255).astype(np.uint8)


def calibrate_quant(layer: LayerSpec, inputs: np.ndarray, target: float = 96.0,
                    activation: str = "relu", output_signed: bool = False) -> QuantParams:
    """Per-channel scales mapping the spread of psums to roughly ``target`` output levels."""
    x, _ = lower_inputs(layer, inputs)
    psums = ideal_psums_matrix(layer, x).astype(np.float64)
    spread = psums.std(axis=0) + np.abs(psums.mean(axis=0))
    spread[spread == 0] = 1.0
    scale = target / (3.0 * spread)
    return QuantParams(scale, np.zeros_like(scale), activation, output_signed)


def fc_layer(rng: np.random.Generator, n_filters: int, fan_in: int, name: str = "fc",
             inputs: np.ndarray | None = None, is_last_layer: bool = False,
             zero_point: int = 128, weights: np.ndarray | None = None,
             **weight_kw) -> LayerSpec:
    if weights is None:
        weights = bell_weights(rng, (n_filters, fan_in), zero_point, **weight_kw)
    quant = QuantParams(np.ones(n_filters), np.zeros(n_filters))
    layer = LayerSpec(name, FULLY_CONNECTED, weights, quant, weight_zero_point=zero_point,
                      is_last_layer=is_last_layer)
    if inputs is None:
        inputs = skewed_inputs(rng, (16, fan_in))
    layer.quant = calibrate_quant(layer, inputs)
    return layer


def conv_layer(rng: np.random.Generator, out_channels: int, in_channels: int, kernel: int,
               input_hw: tuple[int, int], name: str = "conv", stride: int = 1,
               padding: int = 0, zero_point: int = 128,
               inputs: np.ndarray | None = None, **weight_kw) -> LayerSpec:
    weights = bell_weights(rng, (out_channels, in_channels, kernel, kernel), zero_point,
                           **weight_kw)
    quant = QuantParams(np.ones(out_channels), np.zeros(out_channels))
    layer = LayerSpec(name, CONVOLUTION, weights, quant, weight_zero_point=zero_point,
                      stride=stride, padding=padding)
    if inputs is None:
        inputs = skewed_inputs(rng, (4, in_channels) + tuple(input_hw))
    layer.quant = calibrate_quant(layer, inputs)
    return layer
