"""
Irregular convolution: kernels whose taps sit at learnable fractional offsets.

A kernel is ``K = [W, P]``: weights ``W[c_out][c_in][i]`` and one shared
position set ``P[c_in][i] = (p_x, p_y)`` measured from the kernel center
(``p_x`` runs down rows, ``p_y`` along columns). Inputs are sampled at the
fractional tap positions with bilinear interpolation, laid out as an im2col
patch matrix and multiplied with the weight matrix.

Conventions:
    - neighbor cell of a coordinate ``x`` is ``(floor(x), floor(x) + 1)``,
      also for integer ``x`` (the second neighbor then has weight 0)
    - neighbors outside ``[0, H) x [0, W)`` contribute 0 (zero padding)
    - position gradients at integer coordinates are the right-hand limit,
      the slope across the cell ``(floor(x), floor(x) + 1)``
    - output extents follow the nominal integer grid (valid convolution),
      wherever the taps have drifted
"""

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import ArgumentError, ShapeError
from .tensor import Tensor, check_finite

Grid = Tuple[int, int]
Stride = Tuple[int, int]


def _frozen(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


@dataclass(frozen=True)
class PositionSet:
    """
    Tap offsets ``offsets[c_in, i] = (p_x, p_y)`` relative to the kernel center.

    ``grid`` is the nominal (rows, cols) layout the taps started from; it
    fixes the kernel center and the output extents.
    """

    offsets: np.ndarray
    grid: Grid

    def __post_init__(self):
        offsets = np.array(self.offsets, dtype=np.float64)
        if offsets.ndim != 3 or offsets.shape[2] != 2:
            raise ShapeError(f"offsets must have shape (c_in, n, 2), got {offsets.shape}")
        rows, cols = (int(g) for g in self.grid)
        if rows < 1 or cols < 1:
            raise ArgumentError(f"grid extents must be >= 1, got {self.grid}")
        if offsets.shape[1] != rows * cols:
            raise ShapeError(f"{offsets.shape[1]} taps per channel do not fill a {rows}x{cols} grid")
        check_finite(offsets, "position offsets")
        object.__setattr__(self, "offsets", _frozen(offsets))
        object.__setattr__(self, "grid", (rows, cols))

    @property
    def c_in(self) -> int:
        return self.offsets.shape[0]

    @property
    def n(self) -> int:
        return self.offsets.shape[1]

    @property
    def center(self) -> Tuple[int, int]:
        return ((self.grid[0] - 1) // 2, (self.grid[1] - 1) // 2)

    def replace_offsets(self, offsets: np.ndarray) -> "PositionSet":
        return PositionSet(offsets, self.grid)


def nominal_offsets(grid_rows: int, grid_cols: int) -> np.ndarray:
    """Integer offsets of a regular grid from its center, row-major, shape (n, 2)."""
    center_r, center_c = (grid_rows - 1) // 2, (grid_cols - 1) // 2
    rr, cc = np.meshgrid(
        np.arange(grid_rows) - center_r, np.arange(grid_cols) - center_c, indexing="ij"
    )
    return np.stack([rr.ravel(), cc.ravel()], axis=1).astype(np.float64)


def init_positions(grid_rows: int, grid_cols: int, epsilon_init: float, c_in: int = 1) -> PositionSet:
    """
    Regular grid shifted by ``epsilon_init`` on both coordinates of every tap.

    The shift keeps taps off integer coordinates, where the bilinear weight
    has no derivative. ``epsilon_init = 0`` gives the exact integer grid.
    """
    if grid_rows < 1 or grid_cols < 1:
        raise ArgumentError(f"grid extents must be >= 1, got ({grid_rows}, {grid_cols})")
    if not abs(epsilon_init) < 0.5:
        raise ArgumentError(f"|epsilon_init| must be < 0.5, got {epsilon_init}")
    if c_in < 1:
        raise ArgumentError(f"c_in must be >= 1, got {c_in}")
    base = nominal_offsets(grid_rows, grid_cols) + epsilon_init
    return PositionSet(np.repeat(base[np.newaxis], c_in, axis=0), (grid_rows, grid_cols))


@dataclass(frozen=True)
class IrregularKernel:
    """Weights ``[c_out, c_in, n]`` plus one PositionSet shared by all output channels."""

    weights: np.ndarray
    positions: PositionSet
    stride: Stride = (1, 1)

    def __post_init__(self):
        weights = np.array(self.weights, dtype=np.float64)
        if weights.ndim != 3:
            raise ShapeError(f"weights must have shape (c_out, c_in, n), got {weights.shape}")
        if weights.shape[1:] != (self.positions.c_in, self.positions.n):
            raise ShapeError(
                f"weights {weights.shape} do not match positions (c_in={self.positions.c_in}, n={self.positions.n})"
            )
        stride = tuple(int(s) for s in self.stride)
        if len(stride) != 2 or min(stride) < 1:
            raise ArgumentError(f"stride must be two positive integers, got {self.stride}")
        check_finite(weights, "kernel weights")
        object.__setattr__(self, "weights", _frozen(weights))
        object.__setattr__(self, "stride", stride)

    @property
    def c_out(self) -> int:
        return self.weights.shape[0]

    @property
    def c_in(self) -> int:
        return self.weights.shape[1]

    @property
    def grid(self) -> Grid:
        return self.positions.grid


@dataclass(frozen=True)
class AxisSamples:
    """Bilinear neighbors along one spatial axis, shape (2, c_in, n, out_extent)."""

    index: np.ndarray
    weight: np.ndarray
    valid: np.ndarray


@dataclass(frozen=True)
class InterpolatedPatchMatrix:
    """
    Interpolated im2col matrix plus the bilinear caches the backward passes reuse.

    ``values`` has one row per (batch, out_row, out_col) and one column per
    (c_in, tap).
    """

    values: np.ndarray
    rows: AxisSamples
    cols: AxisSamples
    input_shape: Tuple[int, int, int, int]
    out_extents: Tuple[int, int]

    @property
    def batch(self) -> int:
        return self.input_shape[0]

    def output_shape(self, c_out: int) -> Tuple[int, int, int, int]:
        return (self.batch, c_out) + self.out_extents


def output_extents(height: int, width: int, grid: Grid, stride: Stride) -> Tuple[int, int]:
    out_h = (height - (grid[0] - 1) - 1) // stride[0] + 1
    out_w = (width - (grid[1] - 1) - 1) // stride[1] + 1
    if out_h < 1 or out_w < 1:
        raise ShapeError(
            f"input {height}x{width} too small for a {grid[0]}x{grid[1]} grid with stride {stride}"
        )
    return out_h, out_w


def _axis_samples(origins: np.ndarray, center: int, offsets: np.ndarray, extent: int) -> AxisSamples:
    coords = origins[np.newaxis, np.newaxis, :] + center + offsets[:, :, np.newaxis]
    lower = np.floor(coords)
    frac = coords - lower
    lower = lower.astype(np.int64)
    index = np.stack([lower, lower + 1])
    weight = np.stack([1.0 - frac, frac])
    valid = (index >= 0) & (index < extent)
    return AxisSamples(index=index, weight=weight, valid=valid)


def _neighbor_index(shape: Tuple[int, ...], rows: AxisSamples, cols: AxisSamples, a: int, b: int):
    """Index into a (B, C, H, W) array for row neighbor a and col neighbor b, plus the in-bounds mask."""
    _, channels, height, width = shape
    ch = np.arange(channels)[:, np.newaxis, np.newaxis, np.newaxis]
    rr = np.clip(rows.index[a], 0, height - 1)[:, :, :, np.newaxis]
    cc = np.clip(cols.index[b], 0, width - 1)[:, :, np.newaxis, :]
    mask = rows.valid[a][:, :, :, np.newaxis] & cols.valid[b][:, :, np.newaxis, :]
    return (slice(None), ch, rr, cc), mask


def _gather(data: np.ndarray, rows: AxisSamples, cols: AxisSamples, a: int, b: int) -> np.ndarray:
    """Neighbor values ``(batch, c_in, n, out_h, out_w)``, zero where out of bounds."""
    index, mask = _neighbor_index(data.shape, rows, cols, a, b)
    return np.where(mask, data[index], 0.0)


def interpolate(input: Tensor, x: float, y: float, batch: int, channel: int) -> float:
    """
    Bilinear sample of one (batch, channel) plane at row ``x``, column ``y``.

    Out-of-bounds neighbors count as zero.
    """
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ArgumentError(f"sampling coordinate must be finite, got ({x}, {y})")
    plane = input.data[batch, channel]
    height, width = plane.shape
    x0, y0 = math.floor(x), math.floor(y)
    total = 0.0
    for xk in (x0, x0 + 1):
        if not 0 <= xk < height:
            continue
        for yk in (y0, y0 + 1):
            if 0 <= yk < width:
                total += (1.0 - abs(x - xk)) * (1.0 - abs(y - yk)) * plane[xk, yk]
    return total


def im2col_irregular(input: Tensor, positions: PositionSet, stride: Stride = (1, 1)) -> InterpolatedPatchMatrix:
    """Interpolated patch matrix for every output location, shape (B*OH*OW, c_in*n)."""
    batch, channels, height, width = input.shape
    if height < 1 or width < 1:
        raise ShapeError(f"input spatial extents must be >= 1, got {height}x{width}")
    if channels != positions.c_in:
        raise ShapeError(f"input has {channels} channels, positions expect {positions.c_in}")
    out_h, out_w = output_extents(height, width, positions.grid, stride)
    center_r, center_c = positions.center

    rows = _axis_samples(np.arange(out_h) * stride[0], center_r, positions.offsets[:, :, 0], height)
    cols = _axis_samples(np.arange(out_w) * stride[1], center_c, positions.offsets[:, :, 1], width)

    data = input.data
    values = np.zeros((batch, channels, positions.n, out_h, out_w))
    for a in (0, 1):
        for b in (0, 1):
            weight = rows.weight[a][:, :, :, np.newaxis] * cols.weight[b][:, :, np.newaxis, :]
            values += weight * _gather(data, rows, cols, a, b)

    matrix = values.transpose(0, 3, 4, 1, 2).reshape(batch * out_h * out_w, channels * positions.n)
    return InterpolatedPatchMatrix(
        values=_frozen(np.ascontiguousarray(matrix)),
        rows=rows,
        cols=cols,
        input_shape=input.shape,
        out_extents=(out_h, out_w),
    )


def forward_with_patches(input: Tensor, kernel: IrregularKernel) -> Tuple[Tensor, InterpolatedPatchMatrix]:
    """Forward pass that also returns the patch matrix for the backward passes."""
    if input.shape[1] != kernel.c_in:
        raise ShapeError(f"input has {input.shape[1]} channels, kernel expects {kernel.c_in}")
    patches = im2col_irregular(input, kernel.positions, kernel.stride)
    out = patches.values @ kernel.weights.reshape(kernel.c_out, -1).T
    batch = input.shape[0]
    out_h, out_w = patches.out_extents
    out = out.reshape(batch, out_h, out_w, kernel.c_out).transpose(0, 3, 1, 2)
    check_finite(out, "irregular convolution output")
    return Tensor(out), patches


def forward(input: Tensor, kernel: IrregularKernel) -> Tensor:
    return forward_with_patches(input, kernel)[0]


def _grad_matrix(grad_out: Tensor, patches: InterpolatedPatchMatrix, c_out: Optional[int] = None) -> np.ndarray:
    batch, channels, out_h, out_w = grad_out.shape
    if (batch, out_h, out_w) != (patches.batch,) + patches.out_extents:
        raise ShapeError(
            f"grad_out {grad_out.shape} does not match forward output extents "
            f"{(patches.batch,) + patches.out_extents}"
        )
    if c_out is not None and channels != c_out:
        raise ShapeError(f"grad_out has {channels} channels, kernel has {c_out}")
    return grad_out.data.transpose(0, 2, 3, 1).reshape(batch * out_h * out_w, channels)


def backward_weights(grad_out: Tensor, patches: InterpolatedPatchMatrix) -> np.ndarray:
    """Weight gradient ``[c_out, c_in, n]``, summed over batch and output locations."""
    grad = _grad_matrix(grad_out, patches)
    _, c_in, _, _ = patches.input_shape
    n = patches.values.shape[1] // c_in
    return (grad.T @ patches.values).reshape(grad.shape[1], c_in, n)


def _patch_grad(grad_out: Tensor, kernel: IrregularKernel, patches: InterpolatedPatchMatrix) -> np.ndarray:
    """Gradient w.r.t. the interpolated values, shape (B, c_in, n, OH, OW)."""
    grad = _grad_matrix(grad_out, patches, kernel.c_out)
    dcols = grad @ kernel.weights.reshape(kernel.c_out, -1)
    out_h, out_w = patches.out_extents
    return dcols.reshape(patches.batch, out_h, out_w, kernel.c_in, kernel.positions.n).transpose(0, 3, 4, 1, 2)


def backward_input(grad_out: Tensor, kernel: IrregularKernel, patches: InterpolatedPatchMatrix) -> Tensor:
    """Input gradient: each interpolated value scatters back to its 4 neighbors."""
    dpatch = _patch_grad(grad_out, kernel, patches)
    grad_input = np.zeros(patches.input_shape)
    rows, cols = patches.rows, patches.cols
    for a in (0, 1):
        for b in (0, 1):
            index, mask = _neighbor_index(patches.input_shape, rows, cols, a, b)
            weight = rows.weight[a][:, :, :, np.newaxis] * cols.weight[b][:, :, np.newaxis, :]
            np.add.at(grad_input, index, np.where(mask, dpatch * weight, 0.0))
    return Tensor(grad_input)


def backward_positions(
    grad_out: Tensor, kernel: IrregularKernel, input: Tensor, patches: InterpolatedPatchMatrix
) -> np.ndarray:
    """
    Position gradient ``[c_in, n, 2]`` as (dp_x, dp_y).

    Summed over batch, output channels and output locations; positions are
    shared, so every output channel contributes to the same taps.
    """
    if input.shape != patches.input_shape:
        raise ShapeError(f"input {input.shape} is not the forward input {patches.input_shape}")
    dpatch = _patch_grad(grad_out, kernel, patches)
    rows, cols = patches.rows, patches.cols
    data = input.data
    q00 = _gather(data, rows, cols, 0, 0)
    q01 = _gather(data, rows, cols, 0, 1)
    q10 = _gather(data, rows, cols, 1, 0)
    q11 = _gather(data, rows, cols, 1, 1)

    wr0, wr1 = (w[:, :, :, np.newaxis] for w in rows.weight)
    wc0, wc1 = (w[:, :, np.newaxis, :] for w in cols.weight)
    # the cell stays (floor, floor + 1) at integers, so this is the right-hand slope there
    d_row = wc0 * (q10 - q00) + wc1 * (q11 - q01)
    d_col = wr0 * (q01 - q00) + wr1 * (q11 - q10)

    grad = np.empty((kernel.c_in, kernel.positions.n, 2))
    grad[:, :, 0] = np.sum(dpatch * d_row, axis=(0, 3, 4))
    grad[:, :, 1] = np.sum(dpatch * d_col, axis=(0, 3, 4))
    return grad
