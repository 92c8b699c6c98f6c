"""Differentiable array primitives for the denoising network.

Arrays are plain numpy ndarrays in C (row-major) order; a feature map is
shaped (channels, height, width) and convolution weights are shaped
(out_channels, in_channels, k, k) with odd k. Convolution uses the
cross-correlation orientation (no kernel flip) and zero "same" padding of
(k - 1) / 2 on each border, so spatial dimensions are always preserved.

Every function here is pure. Backward passes are hand-derived adjoints of
the forward computations and are checked against central finite differences
in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeMismatchError


@dataclass
class ConvLayerParams:
    """One convolution layer: weights (out, in, k, k) and bias (out,)."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        if self.weights.ndim != 4:
            raise ShapeMismatchError(
                f"conv weights must have rank 4, got rank {self.weights.ndim}"
            )
        out_c, _, kh, kw = self.weights.shape
        if kh != kw:
            raise ShapeMismatchError(f"conv kernel must be square, got {kh}x{kw}")
        if kh % 2 == 0:
            raise ShapeMismatchError(f"conv kernel size must be odd, got {kh}")
        if self.bias.shape != (out_c,):
            raise ShapeMismatchError(
                f"conv bias shape {self.bias.shape} does not match {out_c} output channels"
            )

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def kernel_size(self) -> int:
        return self.weights.shape[2]


def _check_input(x: np.ndarray, params: ConvLayerParams) -> None:
    if x.ndim != 3:
        raise ShapeMismatchError(f"conv input must be (channels, H, W), got rank {x.ndim}")
    if x.shape[0] != params.in_channels:
        raise ShapeMismatchError(
            f"conv input channels: expected {params.in_channels}, got {x.shape[0]}"
        )


def _padded_windows(x: np.ndarray, k: int) -> np.ndarray:
    """All k-by-k windows of x under same-zero padding: (C, H, W, k, k) view."""
    pad = (k - 1) // 2
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    return sliding_window_view(xp, (k, k), axis=(1, 2))


def conv2d_forward(x: np.ndarray, params: ConvLayerParams) -> np.ndarray:
    """Same-padded cross-correlation of x (C_in, H, W) -> (C_out, H, W)."""
    _check_input(x, params)
    win = _padded_windows(x, params.kernel_size)
    out = np.tensordot(params.weights, win, axes=([1, 2, 3], [0, 3, 4]))
    out += params.bias[:, None, None]
    return out


def conv2d_backward(
    x: np.ndarray, params: ConvLayerParams, grad_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of sum(grad_out * conv2d_forward(x, params)).

    Returns (grad_input, grad_weights, grad_bias). The input gradient is the
    adjoint of same-padded cross-correlation: a same-padded cross-correlation
    of grad_out with the spatially flipped, channel-transposed weights.
    """
    _check_input(x, params)
    expected = (params.out_channels, x.shape[1], x.shape[2])
    if grad_out.shape != expected:
        raise ShapeMismatchError(
            f"grad_out shape {grad_out.shape} does not match conv output {expected}"
        )
    k = params.kernel_size
    win = _padded_windows(x, k)
    grad_w = np.tensordot(grad_out, win, axes=([1, 2], [1, 2]))
    grad_b = grad_out.sum(axis=(1, 2))
    flipped = np.ascontiguousarray(params.weights[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    gwin = _padded_windows(grad_out, k)
    grad_x = np.tensordot(flipped, gwin, axes=([1, 2, 3], [0, 3, 4]))
    return grad_x, grad_w, grad_b


def relu_forward(x: np.ndarray) -> np.ndarray:
    """Elementwise max(x, 0)."""
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """grad_out masked by (x > 0); the subgradient at exactly 0 is 0."""
    if x.shape != grad_out.shape:
        raise ShapeMismatchError(
            f"relu grad shape {grad_out.shape} does not match input shape {x.shape}"
        )
    return grad_out * (x > 0)


def concat_channels(parts: Sequence[np.ndarray]) -> np.ndarray:
    """Stack feature maps along the channel axis, in the given order."""
    if len(parts) == 0:
        raise ShapeMismatchError("concat_channels needs at least one part")
    hw = parts[0].shape[1:]
    for i, p in enumerate(parts):
        if p.ndim != 3:
            raise ShapeMismatchError(f"concat part {i} must be (C, H, W), got rank {p.ndim}")
        if p.shape[1:] != hw:
            raise ShapeMismatchError(
                f"concat part {i} spatial size {p.shape[1:]} does not match {hw}"
            )
    return np.concatenate(parts, axis=0)


def split_channels(x: np.ndarray, sizes: Sequence[int]) -> list[np.ndarray]:
    """Inverse of concat_channels: split x into blocks of the given channel counts."""
    if x.ndim != 3:
        raise ShapeMismatchError(f"split input must be (C, H, W), got rank {x.ndim}")
    if sum(sizes) != x.shape[0]:
        raise ShapeMismatchError(
            f"split sizes sum to {sum(sizes)} but input has {x.shape[0]} channels"
        )
    out = []
    at = 0
    for c in sizes:
        out.append(x[at : at + c].copy())
        at += c
    return out


def residual_add(y_spatial: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Reconstruct a band estimate as noisy input plus predicted residual."""
    if y_spatial.shape != phi.shape:
        raise ShapeMismatchError(
            f"residual shape {phi.shape} does not match input shape {y_spatial.shape}"
        )
    return y_spatial + phi


def finite_diff_grad(
    scalar_fn: Callable[[np.ndarray], float], point: np.ndarray, step: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient estimate of scalar_fn at point, per component."""
    grad = np.zeros(point.shape, dtype=np.float64)
    for i in range(point.size):
        plus = point.astype(np.float64, copy=True)
        plus.flat[i] += step
        minus = point.astype(np.float64, copy=True)
        minus.flat[i] -= step
        grad.flat[i] = (scalar_fn(plus) - scalar_fn(minus)) / (2.0 * step)
    return grad


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-12) -> float:
    """Largest deviation between the two arrays, relative to their common scale.

    The scale is the larger of the two max-magnitudes (floored), so
    near-zero components are judged against the tensor's overall size rather
    than against themselves.
    """
    scale = max(float(np.max(np.abs(analytic))), float(np.max(np.abs(numeric))), floor)
    return float(np.max(np.abs(analytic - numeric)) / scale)
