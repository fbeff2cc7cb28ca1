import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from efflif.errors import DimensionError, DivisibilityError
from efflif.tensor import (BitTensor, channel_concat, channel_split, conv1d, conv1d_grad_input,
                           conv1d_grad_weights, matvec)


@pytest.mark.parametrize("W, o, want", [
    ([[1, 2], [3, 4]], [1, 0], [1, 3]),
    ([[1, 2], [3, 4]], [0, 0], [0, 0]),
    ([[0.5, -0.5]], [1, 1], [0.0]),
])
def test_matvec(W, o, want):
    np.testing.assert_array_equal(matvec(np.array(W, float), np.array(o, float)), want)


def test_matvec_shape_error_names_both():
    with pytest.raises(DimensionError, match=r"\(2, 2\).*\(3,\)|\(3,\).*\(2, 2\)"):
        matvec(np.ones((2, 2)), np.ones(3))


@pytest.mark.parametrize("W, x, want", [
    ([[[1, 1]]], [1, 0, 1], [1, 1]),
    ([[[1]]], [0, 1, 0], [0, 1, 0]),
    ([[[1, -1]]], [1, 1], [0]),
])
def test_conv1d_examples(W, x, want):
    out = conv1d(np.array(W, float), np.array([x], float))
    np.testing.assert_array_equal(out, [want])


def test_conv1d_kernel_too_large():
    with pytest.raises(DimensionError):
        conv1d(np.ones((1, 1, 4)), np.ones((1, 3)))


def test_conv1d_grads_match_finite_differences():
    rng = np.random.default_rng(0)
    W = rng.normal(size=(3, 2, 3))
    x = rng.normal(size=(4, 2, 6))
    dout = rng.normal(size=(4, 3, 6))

    def f(W, x):
        return float(np.sum(conv1d(W, x, padding=1) * dout))

    gW = conv1d_grad_weights(dout, x, 3, 1)
    gx = conv1d_grad_input(dout, W, 6, 1)
    h = 1e-6
    for arr, g in ((W, gW), (x, gx)):
        for idx in [(0, 0, 0), (1, 1, 2), (2, 0, 1)]:
            if idx[-1] >= arr.shape[-1]:
                continue
            old = arr[idx]
            arr[idx] = old + h
            up = f(W, x)
            arr[idx] = old - h
            down = f(W, x)
            arr[idx] = old
            assert g[idx] == pytest.approx((up - down) / (2 * h), rel=1e-6)


def test_channel_split_examples():
    x = np.arange(8.0).reshape(4, 2)
    parts = channel_split(x, 2)
    assert [p.shape for p in parts] == [(2, 2), (2, 2)]
    np.testing.assert_array_equal(channel_concat(parts), x)
    (only,) = channel_split(x, 1)
    np.testing.assert_array_equal(only, x)
    with pytest.raises(DivisibilityError):
        channel_split(np.ones((3, 2)), 2)


@given(arrays(np.uint8, st.tuples(st.integers(1, 5), st.integers(1, 13)),
              elements=st.integers(0, 1)))
def test_bittensor_roundtrip(a):
    bt = BitTensor.pack(a)
    np.testing.assert_array_equal(bt.unpack(), a)
    again = BitTensor.pack(bt.unpack())
    assert again == bt
    assert again.bits.tobytes() == bt.bits.tobytes()
    assert bt.count() == int(a.sum())
    assert bt.nbytes == (a.size + 7) // 8


def test_bittensor_rejects_non_binary():
    with pytest.raises(ValueError):
        BitTensor.pack([0, 2])
    assert BitTensor.zeros((3, 3)).count() == 0
