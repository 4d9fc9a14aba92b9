import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from mvface import tensor_core as tc
from checks import RTOL_FD, gradcheck_ops
from oracles import conv2d_loops


def test_tensor_validates():
    t = tc.tensor([1, 2, 3, 4], shape=(2, 2))
    assert t.dtype == np.float32 and t.shape == (2, 2)
    with pytest.raises(tc.ShapeError):
        tc.tensor([1, 2, 3], shape=(2, 2))
    with pytest.raises(tc.NonFiniteError):
        tc.tensor([1.0, float("nan")])
    with pytest.raises(tc.NonFiniteError):
        tc.tensor([float("inf")])


def test_parameter_grad_shape():
    p = tc.Parameter(tc.tensor(np.ones((2, 3))))
    assert p.grad.shape == (2, 3) and not p.grad.any()
    with pytest.raises(tc.ShapeError):
        tc.Parameter(tc.tensor(np.ones(3)), np.zeros(2))


# -- matmul --------------------------------------------------------------------

def test_matmul_examples():
    a = tc.tensor([[1, 2], [3, 4]])
    np.testing.assert_array_equal(tc.matmul(tc.tensor(np.eye(2)), a), a)
    np.testing.assert_array_equal(tc.matmul(a, tc.tensor([[5, 6], [7, 8]])), [[19, 22], [43, 50]])
    np.testing.assert_array_equal(
        tc.matmul(np.zeros((3, 2), np.float32), tc.tensor(np.arange(10).reshape(2, 5))),
        np.zeros((3, 5)))
    with pytest.raises(tc.ShapeError):
        tc.matmul(np.zeros((2, 3)), np.zeros((2, 3)))


@pytest.mark.filterwarnings("ignore:overflow encountered")
def test_matmul_overflow_is_an_error():
    big = np.full((1, 2), 3e38, np.float32)
    with pytest.raises(tc.NonFiniteError):
        tc.matmul(big, np.ones((2, 1), np.float32))


# -- softmax -------------------------------------------------------------------

def test_softmax_examples():
    np.testing.assert_allclose(tc.softmax(tc.tensor([0, 0])), [0.5, 0.5])
    np.testing.assert_allclose(tc.softmax(tc.tensor([0, math.log(3)])), [0.25, 0.75], rtol=1e-6)
    for x in (-1e4, 0.0, 3.7, 1e4):
        assert tc.softmax(tc.tensor([x]))[0] == 1.0
    with pytest.raises(tc.ShapeError):
        tc.softmax(tc.tensor([1, 2]), axis=1)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float32, st.tuples(st.integers(1, 5), st.integers(1, 6)),
              elements=st.floats(-1e4, 1e4, width=32)),
       st.integers(0, 1))
def test_softmax_normalizes(x, axis):
    y = tc.softmax(x, axis=axis)
    assert np.all(y > 0) or x.shape[axis] > 1  # large gaps may underflow to 0
    np.testing.assert_allclose(y.astype(np.float64).sum(axis=axis), 1.0, atol=1e-6)


# -- conv2d --------------------------------------------------------------------

def test_conv_1x1_is_pixelwise_matmul(rng):
    for _ in range(20):
        x = tc.tensor(rng.normal(size=(3, 4, 5)))
        k = tc.tensor(rng.normal(size=(2, 3, 1, 1)))
        out = tc.conv2d(x, k)
        ref = tc.matmul(k[:, :, 0, 0], x.reshape(3, -1)).reshape(2, 4, 5)
        np.testing.assert_allclose(out, ref, atol=1e-6)


def test_conv_identity_kernel(rng):
    x = tc.tensor(rng.normal(size=(1, 5, 6)))
    k = np.zeros((1, 1, 3, 3), np.float32)
    k[0, 0, 1, 1] = 1
    np.testing.assert_array_equal(tc.conv2d(x, k), x)


def test_conv_constant_input_all_ones_kernel():
    x = np.full((1, 5, 5), 2.5, np.float32)
    out = tc.conv2d(x, np.ones((1, 1, 3, 3), np.float32))
    np.testing.assert_array_equal(out[0, 1:-1, 1:-1], 9 * 2.5)
    assert out[0, 0, 0] == 4 * 2.5 and out[0, 0, 2] == 6 * 2.5   # zero fill


def test_conv_matches_loops(rng):
    x = rng.normal(size=(2, 4, 3))
    k = rng.normal(size=(3, 2, 3, 3))
    b = rng.normal(size=3)
    out = tc.conv2d(x, k, b)
    np.testing.assert_allclose(out, conv2d_loops(x.tolist(), k, b), atol=1e-12)


def test_conv_errors():
    with pytest.raises(tc.ShapeError):
        tc.conv2d(np.zeros((1, 4, 4)), np.zeros((1, 1, 5, 5)))
    with pytest.raises(tc.ShapeError):
        tc.conv2d(np.zeros((2, 4, 4)), np.zeros((1, 1, 3, 3)))


# -- channel norm ---------------------------------------------------------------

def test_channel_norm_examples():
    one, zero = np.ones(3, np.float32), np.zeros(3, np.float32)
    x = np.full((3, 2, 2), 4.0, np.float32)
    np.testing.assert_array_equal(tc.channel_norm(x, one, zero), 0.0)
    x = tc.tensor([1, -1]).reshape(2, 1, 1)
    np.testing.assert_allclose(tc.channel_norm(x, np.ones(2), np.zeros(2), eps=1e-12).ravel(),
                               [1, -1], rtol=1e-6)
    x = tc.tensor(np.random.default_rng(0).normal(size=(3, 2, 2)))
    np.testing.assert_array_equal(tc.channel_norm(x, zero, np.full(3, 0.7, np.float32)),
                                  np.float32(0.7))
    with pytest.raises(ValueError):
        tc.channel_norm(x, one, zero, eps=0)
    with pytest.raises(tc.ShapeError):
        tc.channel_norm(np.zeros((0, 2, 2)), np.zeros(0), np.zeros(0))


# -- reduce ------------------------------------------------------------------------

def test_reduce_examples():
    np.testing.assert_array_equal(tc.reduce(tc.tensor([[1, 5], [3, 2]]), 0, "max"), [3, 5])
    x = tc.tensor(np.arange(6).reshape(1, 2, 3))
    np.testing.assert_array_equal(tc.reduce(x, 0, "mean"), x[0])
    assert tc.reduce(tc.tensor([1, 2, 3, 4]), 0, "mean") == 2.5
    with pytest.raises(tc.ShapeError):
        tc.reduce(x, 3)
    with pytest.raises(ValueError):
        tc.reduce(x, 0, "median")


def test_reduce_mean_is_deterministic(rng):
    x = tc.tensor(rng.normal(size=(7, 5, 5)))
    a, b = tc.reduce(x, 0), tc.reduce(x.copy(), 0)
    assert a.tobytes() == b.tobytes()


# -- bilinear sampling ---------------------------------------------------------------

def test_identity_grid_is_exact_identity(rng):
    for H, W in [(1, 1), (2, 3), (4, 4), (7, 5), (32, 17)]:
        x = tc.tensor(rng.normal(size=(2, H, W)))
        assert tc.bilinear_sample(x, tc.identity_grid(H, W)).tobytes() == x.tobytes()


def test_sample_center_of_2x2_is_mean():
    x = tc.tensor([[1, 2], [3, 10]]).reshape(1, 2, 2)
    out = tc.bilinear_sample(x, np.zeros((1, 1, 2), np.float32))
    assert out[0, 0, 0] == 4.0


def test_one_pixel_shift_on_ramp():
    # index-arithmetic oracle: out[i, j] = ramp[i, min(j + 1, W - 1)]
    H = W = 4
    ramp = tc.tensor(np.arange(H * W).reshape(1, H, W))
    grid = tc.identity_grid(H, W)
    grid[..., 0] += 2.0 / W
    out = tc.bilinear_sample(ramp, grid)
    expected = np.array([[ramp[0, i, min(j + 1, W - 1)] for j in range(W)] for i in range(H)])
    np.testing.assert_array_equal(out[0], expected)


def test_sample_grid_shape_error():
    with pytest.raises(tc.ShapeError):
        tc.bilinear_sample(np.zeros((1, 2, 2)), np.zeros((2, 2, 3)))


# -- gradient checks ------------------------------------------------------------------

@pytest.mark.parametrize("seed", range(100))
def test_gradients_match_finite_differences(seed):
    errs = gradcheck_ops(seed)
    bad = {k: v for k, v in errs.items() if v > RTOL_FD}
    assert not bad, bad
