"""
Tests for irregular convolution: interpolation, im2col, forward and the
three backward passes.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src import irrconv, oracle
from src.errors import ArgumentError, ShapeError
from src.irrconv import IrregularKernel, PositionSet
from src.tensor import Tensor, make_rng


def _kernel(weights, offsets, grid, stride=(1, 1)):
    return IrregularKernel(np.asarray(weights, dtype=float), PositionSet(np.asarray(offsets, dtype=float), grid), stride)


def _random_instance(rng, grid=(3, 3), max_extent=8, max_channels=3):
    c_in = int(rng.integers(1, max_channels + 1))
    c_out = int(rng.integers(1, max_channels + 1))
    height = int(rng.integers(grid[0], max_extent + 1))
    width = int(rng.integers(grid[1], max_extent + 1))
    x = Tensor(rng.normal(size=(int(rng.integers(1, 3)), c_in, height, width)))
    weights = rng.normal(size=(c_out, c_in) + grid)
    return x, weights


# --- init_positions ---

def test_init_positions_3x3():
    positions = irrconv.init_positions(3, 3, 0.1)
    assert positions.n == 9
    assert positions.c_in == 1
    np.testing.assert_allclose(positions.offsets[0, 0], [-0.9, -0.9])
    np.testing.assert_allclose(positions.offsets[0, 1], [-0.9, 0.1])
    np.testing.assert_allclose(positions.offsets[0, 8], [1.1, 1.1])


def test_init_positions_single_tap_and_integer_grid():
    single = irrconv.init_positions(1, 1, 0.05)
    np.testing.assert_array_equal(single.offsets, [[[0.05, 0.05]]])
    exact = irrconv.init_positions(3, 3, 0.0, c_in=2)
    assert np.all(exact.offsets == np.round(exact.offsets))
    np.testing.assert_array_equal(exact.offsets[0], exact.offsets[1])


@pytest.mark.parametrize("epsilon", [0.5, -0.5, 0.7])
def test_init_positions_rejects_large_epsilon(epsilon):
    with pytest.raises(ArgumentError):
        irrconv.init_positions(3, 3, epsilon)


def test_position_set_validates_shape():
    with pytest.raises(ShapeError):
        PositionSet(np.zeros((1, 8, 2)), (3, 3))
    with pytest.raises(ShapeError):
        PositionSet(np.zeros((1, 9)), (3, 3))


# --- interpolate ---

def test_interpolate_examples():
    x = Tensor.from_array([[1.0, 2.0], [3.0, 4.0]])
    assert irrconv.interpolate(x, 0.5, 0.5, 0, 0) == pytest.approx(2.5)
    assert irrconv.interpolate(x, 0.0, 0.0, 0, 0) == 1.0
    assert irrconv.interpolate(x, 1.0, 1.0, 0, 0) == 4.0
    assert irrconv.interpolate(x, -0.5, -0.5, 0, 0) == pytest.approx(0.25)


def test_interpolate_rejects_non_finite():
    x = Tensor.from_array([[1.0]])
    with pytest.raises(ArgumentError):
        irrconv.interpolate(x, float("nan"), 0.0, 0, 0)
    with pytest.raises(ArgumentError):
        irrconv.interpolate(x, 0.0, float("inf"), 0, 0)


@settings(max_examples=50, deadline=None)
@given(x=st.floats(0.0, 2.999), y=st.floats(0.0, 2.999), value=st.floats(-10, 10))
def test_interpolate_constant_image(x, y, value):
    """All four neighbors in bounds: weights sum to one."""
    image = Tensor(np.full((1, 1, 5, 5), value))
    assert irrconv.interpolate(image, x, y, 0, 0) == pytest.approx(value, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(x=st.floats(-2.0, 6.0), y=st.floats(-2.0, 6.0))
def test_interpolate_matches_reference(x, y):
    plane = make_rng(3).normal(size=(4, 5))
    assert irrconv.interpolate(Tensor(plane[None, None]), x, y, 0, 0) == pytest.approx(
        oracle.naive_bilinear(plane, x, y), abs=1e-12
    )


# --- im2col ---

def test_im2col_integer_grid_is_raw_patch(rng):
    x = Tensor(rng.normal(size=(2, 2, 3, 3)))
    patches = irrconv.im2col_irregular(x, irrconv.init_positions(3, 3, 0.0, c_in=2))
    assert patches.values.shape == (2, 18)
    np.testing.assert_array_equal(patches.values[0], x.data[0].reshape(2, 9).ravel())
    np.testing.assert_array_equal(patches.values[1], x.data[1].reshape(2, 9).ravel())


def test_im2col_near_integer_center(rng):
    x = Tensor(rng.normal(size=(1, 2, 5, 6)))
    positions = PositionSet(np.full((2, 9, 2), 1e-12), (3, 3))
    patches = irrconv.im2col_irregular(x, positions)
    assert patches.values.shape == (3 * 4, 18)
    centers = x.data[0, :, 1:4, 1:5].transpose(1, 2, 0).reshape(12, 2)
    expected = np.repeat(centers, 9, axis=1)
    np.testing.assert_allclose(patches.values, expected, atol=1e-9)


def test_im2col_output_too_small():
    with pytest.raises(ShapeError):
        irrconv.im2col_irregular(Tensor(np.zeros((1, 1, 2, 5))), irrconv.init_positions(3, 3, 0.0))


# --- forward ---

def test_forward_identity_kernel(rng):
    x = Tensor(rng.normal(size=(2, 1, 4, 5)))
    out = irrconv.forward(x, _kernel([[[1.0]]], [[[0.0, 0.0]]], (1, 1)))
    np.testing.assert_array_equal(out.data, x.data)


def test_forward_zero_weights(rng):
    x = Tensor(rng.normal(size=(1, 2, 5, 5)))
    kernel = IrregularKernel(np.zeros((3, 2, 9)), irrconv.init_positions(3, 3, 0.2, c_in=2))
    out = irrconv.forward(x, kernel)
    assert out.shape == (1, 3, 3, 3)
    assert np.all(out.data == 0.0)


def test_forward_channel_mismatch(rng):
    kernel = IrregularKernel(np.ones((1, 2, 9)), irrconv.init_positions(3, 3, 0.0, c_in=2))
    with pytest.raises(ShapeError):
        irrconv.forward(Tensor(np.zeros((1, 3, 4, 4))), kernel)


@pytest.mark.parametrize("stride", [(1, 1), (2, 1), (2, 2)])
def test_forward_integer_grid_matches_naive_conv(stride):
    rng = make_rng(11)
    for _ in range(20):
        x, weights = _random_instance(rng)
        c_out, c_in = weights.shape[:2]
        kernel = IrregularKernel(weights.reshape(c_out, c_in, 9), irrconv.init_positions(3, 3, 0.0, c_in), stride)
        expected = oracle.naive_conv(x, weights, stride=stride)
        np.testing.assert_allclose(irrconv.forward(x, kernel).data, expected.data, atol=1e-9, rtol=0)


def test_forward_dilated_grid_matches_dilated_conv():
    rng = make_rng(12)
    for _ in range(20):
        x, weights = _random_instance(rng)
        c_out, c_in = weights.shape[:2]
        offsets = np.repeat(2.0 * irrconv.nominal_offsets(3, 3)[None], c_in, axis=0)
        kernel = _kernel(weights.reshape(c_out, c_in, 9), offsets, (3, 3))
        expected = oracle.naive_conv(x, weights, dilation=2, padding=1)
        np.testing.assert_allclose(irrconv.forward(x, kernel).data, expected.data, atol=1e-9, rtol=0)


def test_forward_even_grid_matches_naive_conv(rng):
    x = Tensor(rng.normal(size=(1, 2, 6, 7)))
    weights = rng.normal(size=(2, 2, 2, 4))
    kernel = IrregularKernel(weights.reshape(2, 2, 8), irrconv.init_positions(2, 4, 0.0, c_in=2))
    np.testing.assert_allclose(irrconv.forward(x, kernel).data, oracle.naive_conv(x, weights).data, atol=1e-9)


def test_forward_matches_reference_at_fractional_positions(rng):
    x = Tensor(rng.normal(size=(2, 2, 7, 6)))
    weights = rng.normal(size=(3, 2, 9))
    offsets = irrconv.nominal_offsets(3, 3)[None] + rng.uniform(-1.5, 1.5, size=(2, 9, 2))
    kernel = _kernel(weights, offsets, (3, 3), (2, 1))
    expected = oracle.naive_irregular_conv(x.data, weights, offsets, (3, 3), (2, 1))
    np.testing.assert_allclose(irrconv.forward(x, kernel).data, expected, atol=1e-12)


def test_forward_is_linear(rng):
    x = Tensor(rng.normal(size=(1, 2, 6, 6)))
    weights = rng.normal(size=(2, 2, 9))
    positions = irrconv.init_positions(3, 3, 0.3, c_in=2)
    base = irrconv.forward(x, IrregularKernel(weights, positions)).data
    doubled_w = irrconv.forward(x, IrregularKernel(2 * weights, positions)).data
    doubled_x = irrconv.forward(Tensor(2 * x.data), IrregularKernel(weights, positions)).data
    np.testing.assert_array_equal(doubled_w, 2 * base)
    np.testing.assert_array_equal(doubled_x, 2 * base)


# --- backward ---

def _setup(rng):
    x = Tensor(rng.normal(size=(2, 2, 6, 5)))
    weights = rng.normal(size=(3, 2, 9))
    offsets = irrconv.nominal_offsets(3, 3)[None] + rng.uniform(0.05, 0.95, size=(2, 9, 2))
    kernel = _kernel(weights, offsets, (3, 3))
    out, patches = irrconv.forward_with_patches(x, kernel)
    return x, kernel, out, patches


def test_backward_zero_grad(rng):
    x, kernel, out, patches = _setup(rng)
    zero = Tensor(np.zeros(out.shape))
    assert np.all(irrconv.backward_weights(zero, patches) == 0.0)
    assert np.all(irrconv.backward_input(zero, kernel, patches).data == 0.0)
    assert np.all(irrconv.backward_positions(zero, kernel, x, patches) == 0.0)


def test_backward_weights_single_location(rng):
    x = Tensor(rng.normal(size=(1, 2, 3, 3)))
    kernel = IrregularKernel(rng.normal(size=(1, 2, 9)), irrconv.init_positions(3, 3, 0.1, c_in=2))
    out, patches = irrconv.forward_with_patches(x, kernel)
    grad = irrconv.backward_weights(Tensor(np.ones(out.shape)), patches)
    np.testing.assert_array_equal(grad.reshape(-1), patches.values[0])


def test_backward_input_identity_kernel(rng):
    x = Tensor(rng.normal(size=(1, 1, 4, 4)))
    kernel = _kernel([[[1.0]]], [[[0.0, 0.0]]], (1, 1))
    out, patches = irrconv.forward_with_patches(x, kernel)
    grad_out = Tensor(rng.normal(size=out.shape))
    np.testing.assert_array_equal(irrconv.backward_input(grad_out, kernel, patches).data, grad_out.data)


def test_backward_shape_mismatch(rng):
    x, kernel, out, patches = _setup(rng)
    wrong = Tensor(np.zeros((1,) + out.shape[1:]))
    with pytest.raises(ShapeError):
        irrconv.backward_weights(wrong, patches)
    with pytest.raises(ShapeError):
        irrconv.backward_input(Tensor(np.zeros((2, 1) + out.shape[2:])), kernel, patches)
    with pytest.raises(ShapeError):
        irrconv.backward_positions(Tensor(np.zeros(out.shape)), kernel, Tensor(np.zeros((2, 2, 5, 5))), patches)


def test_backward_positions_constant_image(rng):
    x = Tensor(np.full((2, 2, 6, 6), 3.0))
    offsets = rng.uniform(-0.95, 0.95, size=(2, 9, 2))
    kernel = _kernel(rng.normal(size=(3, 2, 9)), offsets, (3, 3))
    out, patches = irrconv.forward_with_patches(x, kernel)
    grad = irrconv.backward_positions(Tensor(rng.normal(size=out.shape)), kernel, x, patches)
    assert np.all(grad == 0.0)


def test_backward_positions_ramp():
    ramp = np.tile(np.arange(5, dtype=float), (5, 1))[None, None]
    x = Tensor(ramp)
    kernel = _kernel([[[1.0]]], [[[0.25, 0.25]]], (1, 1))
    out, patches = irrconv.forward_with_patches(x, kernel)
    grad_out = np.zeros(out.shape)
    grad_out[0, 0, 2, 2] = 1.0
    grad = irrconv.backward_positions(Tensor(grad_out), kernel, x, patches)
    np.testing.assert_allclose(grad[0, 0], [0.0, 1.0], atol=1e-12)


def test_backward_positions_shared_across_output_channels(rng):
    x, kernel, out, patches = _setup(rng)
    grad_out = rng.normal(size=out.shape)
    perm = np.array([2, 0, 1])
    permuted = IrregularKernel(kernel.weights[perm], kernel.positions)
    _, permuted_patches = irrconv.forward_with_patches(x, permuted)
    base = irrconv.backward_positions(Tensor(grad_out), kernel, x, patches)
    moved = irrconv.backward_positions(Tensor(grad_out[:, perm]), permuted, x, permuted_patches)
    np.testing.assert_allclose(moved, base, rtol=1e-12, atol=1e-12)


def _loss_with(x, kernel, projection, **override):
    offsets = override.get("offsets", kernel.positions.offsets)
    weights = override.get("weights", kernel.weights)
    data = override.get("input", x.data)
    out = oracle.naive_irregular_conv(data, weights, offsets, kernel.grid, kernel.stride)
    return float(np.sum(projection * out))


def test_backward_matches_finite_differences(rng):
    x, kernel, out, patches = _setup(rng)
    projection = rng.normal(size=out.shape)
    grad_out = Tensor(projection)

    numeric_w = oracle.finite_diff_grad(lambda w: _loss_with(x, kernel, projection, weights=w), kernel.weights)
    numeric_i = oracle.finite_diff_grad(lambda i: _loss_with(x, kernel, projection, input=i), x.data)
    numeric_p = oracle.finite_diff_grad(lambda p: _loss_with(x, kernel, projection, offsets=p), kernel.positions.offsets)

    assert oracle.max_relative_error(irrconv.backward_weights(grad_out, patches), numeric_w) < 1e-4
    assert oracle.max_relative_error(irrconv.backward_input(grad_out, kernel, patches).data, numeric_i) < 1e-4
    assert oracle.max_relative_error(irrconv.backward_positions(grad_out, kernel, x, patches), numeric_p) < 1e-4


def test_backward_positions_integer_takes_right_hand_slope():
    ramp = np.tile(np.arange(5, dtype=float) ** 2, (5, 1))[None, None]
    x = Tensor(ramp)
    kernel = _kernel([[[1.0]]], [[[0.0, 0.0]]], (1, 1))
    out, patches = irrconv.forward_with_patches(x, kernel)
    grad_out = np.zeros(out.shape)
    grad_out[0, 0, 1, 2] = 1.0
    grad = irrconv.backward_positions(Tensor(grad_out), kernel, x, patches)
    # columns 2 and 3 hold 4 and 9; every row is the same
    np.testing.assert_array_equal(grad[0, 0], [0.0, 5.0])


def test_backward_positions_flat_image_on_integer_grid():
    x = Tensor(np.full((1, 1, 6, 6), 3.0))
    kernel = IrregularKernel(np.ones((1, 1, 9)), irrconv.init_positions(3, 3, 0.0))
    out, patches = irrconv.forward_with_patches(x, kernel)
    grad = irrconv.backward_positions(Tensor(np.ones(out.shape)), kernel, x, patches)
    nominal = irrconv.nominal_offsets(3, 3)
    # taps on the last row or column read past the border through floor + 1
    inside = nominal < 1
    assert np.all(grad[0][inside] == 0.0)
    np.testing.assert_array_equal(grad[0, 4], [0.0, 0.0])


def test_backward_positions_ramp_on_integer_grid():
    x = Tensor(np.tile(np.arange(5, dtype=float), (5, 1))[None, None])
    kernel = _kernel([[[1.0]]], [[[0.0, 0.0]]], (1, 1))
    out, patches = irrconv.forward_with_patches(x, kernel)
    grad_out = np.zeros(out.shape)
    grad_out[0, 0, 2, 2] = 1.0
    grad = irrconv.backward_positions(Tensor(grad_out), kernel, x, patches)
    np.testing.assert_array_equal(grad[0, 0], [0.0, 1.0])


def test_backward_positions_sum_over_batch(rng):
    single = Tensor(rng.normal(size=(1, 2, 6, 6)))
    pair = Tensor(np.concatenate([single.data, single.data]))
    kernel = _kernel(rng.normal(size=(3, 2, 9)), irrconv.init_positions(3, 3, 0.05, c_in=2).offsets, (3, 3))
    grad_out = rng.normal(size=(1, 3, 4, 4))
    _, patches = irrconv.forward_with_patches(single, kernel)
    _, pair_patches = irrconv.forward_with_patches(pair, kernel)
    one = irrconv.backward_positions(Tensor(grad_out), kernel, single, patches)
    two = irrconv.backward_positions(Tensor(np.concatenate([grad_out, grad_out])), kernel, pair, pair_patches)
    np.testing.assert_allclose(two, 2.0 * one, rtol=1e-12, atol=1e-12)
