"""
Brute-force reference implementations for tests and gradient checks.

Nothing here imports irrconv or nn: the oracle only depends on the tensor
container, so agreement between the two code paths means something.
"""

import math
from typing import Callable, Tuple

import numpy as np

from .errors import ArgumentError, NumericError, ShapeError
from .tensor import Tensor

ScalarFunction = Callable[[np.ndarray], float]

DEFAULT_STEP = 1e-5
ERROR_FLOOR = 1e-8


def _out_extent(size: int, kernel: int, dilation: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - dilation * (kernel - 1) - 1) // stride + 1


def _conv_setup(input: Tensor, weights: np.ndarray, dilation: int, stride: Tuple[int, int], padding: int):
    if dilation < 1:
        raise ArgumentError(f"dilation must be >= 1, got {dilation}")
    weights = np.asarray(weights, dtype=np.float64)
    batch, channels, height, width = input.shape
    c_out, c_in, kh, kw = weights.shape
    if c_in != channels:
        raise ShapeError(f"input has {channels} channels, weights expect {c_in}")
    out_h = _out_extent(height, kh, dilation, stride[0], padding)
    out_w = _out_extent(width, kw, dilation, stride[1], padding)
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"output extent {out_h}x{out_w} < 1")
    return weights, out_h, out_w


def naive_conv(
    input: Tensor,
    weights: np.ndarray,
    dilation: int = 1,
    stride: Tuple[int, int] = (1, 1),
    padding: int = 0,
) -> Tensor:
    """
    Direct nested-loop convolution at integer taps spaced by ``dilation``.

    Args:
        weights: (c_out, c_in, kh, kw)
        padding: zero padding on every side
    """
    weights, out_h, out_w = _conv_setup(input, weights, dilation, stride, padding)
    data = input.data
    batch, channels, height, width = input.shape
    c_out, _, kh, kw = weights.shape
    out = np.zeros((batch, c_out, out_h, out_w))
    for b in range(batch):
        for o in range(c_out):
            for r in range(out_h):
                for c in range(out_w):
                    total = 0.0
                    for ci in range(channels):
                        for ki in range(kh):
                            row = r * stride[0] + ki * dilation - padding
                            if not 0 <= row < height:
                                continue
                            for kj in range(kw):
                                col = c * stride[1] + kj * dilation - padding
                                if 0 <= col < width:
                                    total += weights[o, ci, ki, kj] * data[b, ci, row, col]
                    out[b, o, r, c] = total
    return Tensor(out)


def naive_conv_by_taps(
    input: Tensor,
    weights: np.ndarray,
    dilation: int = 1,
    stride: Tuple[int, int] = (1, 1),
    padding: int = 0,
) -> Tensor:
    """Same convolution with the tap loop outermost and whole shifted planes per tap."""
    weights, out_h, out_w = _conv_setup(input, weights, dilation, stride, padding)
    padded = np.pad(input.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    c_out, c_in, kh, kw = weights.shape
    out = np.zeros((input.shape[0], c_out, out_h, out_w))
    for ki in range(kh):
        for kj in range(kw):
            r0, c0 = ki * dilation, kj * dilation
            plane = padded[:, :, r0:r0 + stride[0] * (out_h - 1) + 1:stride[0], c0:c0 + stride[1] * (out_w - 1) + 1:stride[1]]
            out += np.einsum("oc,bchw->bohw", weights[:, :, ki, kj], plane)
    return Tensor(out)


def naive_bilinear(plane: np.ndarray, x: float, y: float) -> float:
    """Area-weighted average of the 4 integer neighbors of (x, y); missing neighbors are 0."""
    height, width = plane.shape
    total = 0.0
    for xk in (math.floor(x), math.floor(x) + 1):
        for yk in (math.floor(y), math.floor(y) + 1):
            if 0 <= xk < height and 0 <= yk < width:
                total += (1 - abs(x - xk)) * (1 - abs(y - yk)) * plane[xk, yk]
    return total


def _sample_planes(planes: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Bilinear samples of (B, H, W) planes on the outer product of row and col coordinates."""
    _, height, width = planes.shape
    total = np.zeros((planes.shape[0], rows.size, cols.size))
    for xk in (np.floor(rows), np.floor(rows) + 1):
        wx = np.where((xk >= 0) & (xk < height), 1 - np.abs(rows - xk), 0.0)
        xi = np.clip(xk, 0, height - 1).astype(int)
        for yk in (np.floor(cols), np.floor(cols) + 1):
            wy = np.where((yk >= 0) & (yk < width), 1 - np.abs(cols - yk), 0.0)
            yi = np.clip(yk, 0, width - 1).astype(int)
            total += np.outer(wx, wy) * planes[:, xi[:, None], yi[None, :]]
    return total


def naive_irregular_conv(
    input: np.ndarray,
    weights: np.ndarray,
    offsets: np.ndarray,
    grid: Tuple[int, int],
    stride: Tuple[int, int] = (1, 1),
) -> np.ndarray:
    """
    Irregular convolution with one sampling pass per (input channel, tap).

    Args:
        input: (B, C, H, W)
        weights: (c_out, C, n)
        offsets: (C, n, 2) tap offsets from the kernel center
        grid: nominal (rows, cols), fixes the center and output extents
    """
    batch, channels, height, width = input.shape
    c_out = weights.shape[0]
    out_h = (height - grid[0]) // stride[0] + 1
    out_w = (width - grid[1]) // stride[1] + 1
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"output extent {out_h}x{out_w} < 1")
    center_r, center_c = (grid[0] - 1) // 2, (grid[1] - 1) // 2
    origin_r = np.arange(out_h) * stride[0] + center_r
    origin_c = np.arange(out_w) * stride[1] + center_c
    out = np.zeros((batch, c_out, out_h, out_w))
    for ci in range(channels):
        for tap in range(offsets.shape[1]):
            sample = _sample_planes(input[:, ci], origin_r + offsets[ci, tap, 0], origin_c + offsets[ci, tap, 1])
            out += weights[:, ci, tap][None, :, None, None] * sample[:, None]
    return out


def finite_diff_grad(f: ScalarFunction, x: np.ndarray, h: float = DEFAULT_STEP) -> np.ndarray:
    """Central differences ``(f(x + h e_j) - f(x - h e_j)) / 2h`` for every component j."""
    if h <= 0:
        raise ArgumentError(f"step h must be > 0, got {h}")
    x = np.array(x, dtype=np.float64)
    flat = x.reshape(-1)
    grad = np.zeros_like(flat)
    for j in range(flat.size):
        saved = flat[j]
        flat[j] = saved + h
        upper = f(x)
        flat[j] = saved - h
        lower = f(x)
        flat[j] = saved
        if not (math.isfinite(upper) and math.isfinite(lower)):
            raise NumericError(f"non-finite function value at component {j}")
        grad[j] = (upper - lower) / (2 * h)
    return grad.reshape(x.shape)


def relative_error(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise ``|a - b| / max(|a|, |b|, 1e-8)``."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), ERROR_FLOOR)


def max_relative_error(a: np.ndarray, b: np.ndarray) -> float:
    errors = relative_error(a, b)
    return float(errors.max()) if errors.size else 0.0
