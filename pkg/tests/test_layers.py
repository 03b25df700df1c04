import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from avfusion.errors import DataError, ShapeError
from avfusion.layers import (DeltaConfig, DenseLayer, delta_backward, delta_forward,
                             dense_backward, dense_forward, relu, softmax, softmax_xent)
from avfusion.tensor import make_rng

from conftest import assert_grad_close, numeric_grad


def delta_oracle(x, window):
    """Direct summation of the regression formula with clamped indices."""
    T, D = x.shape
    norm = 2 * sum(t * t for t in range(1, window + 1))
    out = np.zeros_like(x)
    for t in range(T):
        for d in range(D):
            s = 0.0
            for th in range(1, window + 1):
                s += th * (x[min(t + th, T - 1), d] - x[max(t - th, 0), d])
            out[t, d] = s / norm
    return out


# -- dense --------------------------------------------------------------------------

def test_dense_relu_clamp_and_identity():
    relu_layer = DenseLayer(np.eye(2), np.zeros(2), "relu")
    np.testing.assert_array_equal(dense_forward(relu_layer, [[-1.0, 2.0]]), [[0, 2]])
    lin = DenseLayer(np.eye(3), np.zeros(3), "linear")
    x = make_rng(0).normal(size=(4, 3))
    np.testing.assert_array_equal(dense_forward(lin, x), x)


def test_dense_matches_dot_product_oracle(rng):
    layer = DenseLayer.init(rng, 5, 4, "linear")
    layer.b[:] = rng.normal(size=4)
    x = rng.normal(size=(6, 5))
    expected = np.array([[sum(layer.W[o, i] * x[t, i] for i in range(5)) + layer.b[o]
                          for o in range(4)] for t in range(6)])
    np.testing.assert_allclose(dense_forward(layer, x), expected, rtol=0, atol=1e-12)


def test_dense_shape_error(rng):
    with pytest.raises(ShapeError):
        dense_forward(DenseLayer.init(rng, 5, 4), np.zeros((2, 3)))


def test_dense_backward_zero_and_closed_form(rng):
    layer = DenseLayer.init(rng, 3, 2, "linear")
    x = rng.normal(size=(1, 3))
    g = dense_backward(layer, x, np.zeros((1, 2)))
    assert not g.dW.any() and not g.db.any() and not g.dinput.any()
    dout = rng.normal(size=(1, 2))
    np.testing.assert_array_equal(dense_backward(layer, x, dout).dW, dout.T @ x)


@pytest.mark.parametrize("activation", ["relu", "linear"])
def test_dense_backward_finite_differences(rng, activation):
    layer = DenseLayer.init(rng, 6, 5, activation)
    layer.b[:] = rng.normal(size=5) * 0.1
    x = rng.normal(size=(4, 6))
    u = rng.normal(size=(4, 5))
    f = lambda: float((dense_forward(layer, x) * u).sum())
    g = dense_backward(layer, x, u)
    assert_grad_close(g.dW, numeric_grad(f, layer.W))
    assert_grad_close(g.db, numeric_grad(f, layer.b))
    assert_grad_close(g.dinput, numeric_grad(f, x))


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=20))
def test_relu_idempotent(xs):
    x = np.array(xs)
    np.testing.assert_array_equal(relu(relu(x)), relu(x))


# -- delta --------------------------------------------------------------------------

def test_delta_constant_is_zero():
    out = delta_forward(DeltaConfig(2), np.full((7, 3), 4.2))
    np.testing.assert_array_equal(out[:, 3:], 0.0)
    np.testing.assert_array_equal(out[:, :3], 4.2)


def test_delta_ramp_slope_one():
    x = np.arange(12, dtype=float)[:, None]
    out = delta_forward(DeltaConfig(2), x)
    # delta is exact on frames whose +-2 window is in range; delta-delta needs +-4
    np.testing.assert_array_equal(out[2:-2, 1], 1.0)
    np.testing.assert_array_equal(out[4:-4, 2], 0.0)


@pytest.mark.parametrize("window", [1, 2, 3])
def test_delta_matches_direct_oracle(rng, window):
    x = rng.normal(size=(9, 4))
    out = delta_forward(DeltaConfig(window), x)
    d1 = delta_oracle(x, window)
    np.testing.assert_allclose(out[:, 4:8], d1, rtol=0, atol=1e-12)
    np.testing.assert_allclose(out[:, 8:], delta_oracle(d1, window), rtol=0, atol=1e-12)


def test_delta_short_sequences_are_valid(rng):
    for T in (1, 2, 3):
        out = delta_forward(DeltaConfig(2), rng.normal(size=(T, 2)))
        assert out.shape == (T, 6)
    np.testing.assert_array_equal(delta_forward(DeltaConfig(2), [[5.0]]), [[5.0, 0.0, 0.0]])
    with pytest.raises(DataError):
        delta_forward(DeltaConfig(2), np.zeros((0, 2)))
    with pytest.raises(ValueError):
        DeltaConfig(0)


def test_delta_backward_identity_block_and_zero(rng):
    cfg = DeltaConfig(2)
    u = np.zeros((5, 9))
    u[:, :3] = rng.normal(size=(5, 3))
    np.testing.assert_array_equal(delta_backward(cfg, u), u[:, :3])
    np.testing.assert_array_equal(delta_backward(cfg, np.zeros((5, 9))), 0.0)
    with pytest.raises(ShapeError):
        delta_backward(cfg, np.zeros((5, 8)))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 12), st.integers(1, 4), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_delta_linear_and_adjoint(T, D, window, seed):
    r = make_rng(seed)
    cfg = DeltaConfig(window)
    x, y = r.normal(size=(T, D)), r.normal(size=(T, D))
    a, b = r.normal(size=2)
    np.testing.assert_allclose(delta_forward(cfg, a * x + b * y),
                               a * delta_forward(cfg, x) + b * delta_forward(cfg, y),
                               rtol=0, atol=1e-12)
    u = r.normal(size=(T, 3 * D))
    lhs = float((delta_forward(cfg, x) * u).sum())
    rhs = float((x * delta_backward(cfg, u)).sum())
    assert abs(lhs - rhs) < 1e-10


def test_delta_batched_matches_per_sequence(rng):
    cfg = DeltaConfig(2)
    x = rng.normal(size=(3, 6, 2))
    out = delta_forward(cfg, x)
    for k in range(3):
        np.testing.assert_array_equal(out[k], delta_forward(cfg, x[k]))
    u = rng.normal(size=(3, 6, 6))
    back = delta_backward(cfg, u)
    for k in range(3):
        np.testing.assert_allclose(back[k], delta_backward(cfg, u[k]), atol=1e-15)


def test_encoder_plus_delta_finite_differences(rng):
    layers = [DenseLayer.init(rng, 5, 4, "relu"), DenseLayer.init(rng, 4, 3, "linear")]
    for layer in layers:
        layer.b[:] = rng.normal(size=layer.out_dim) * 0.1
    cfg = DeltaConfig(2)
    x = rng.normal(size=(6, 5))
    u = rng.normal(size=(6, 9))

    def f():
        return float((delta_forward(cfg, dense_forward(layers[1], dense_forward(layers[0], x))) * u).sum())

    h = dense_forward(layers[0], x)
    d = delta_backward(cfg, u)
    g1 = dense_backward(layers[1], h, d)
    g0 = dense_backward(layers[0], x, g1.dinput)
    assert_grad_close(g1.dW, numeric_grad(f, layers[1].W))
    assert_grad_close(g0.dW, numeric_grad(f, layers[0].W))
    assert_grad_close(g0.db, numeric_grad(f, layers[0].b))
    assert_grad_close(g0.dinput, numeric_grad(f, x))


# -- softmax / cross-entropy --------------------------------------------------------

def test_softmax_xent_uniform_and_saturated():
    loss, _ = softmax_xent(np.zeros((3, 4)), np.array([0, 1, 2]))
    assert loss == pytest.approx(np.log(4), abs=1e-12)
    logits = np.zeros((2, 3))
    logits[:, 1] = 1000.0
    loss, _ = softmax_xent(logits, np.array([1, 1]))
    assert loss == pytest.approx(0.0, abs=1e-12)


def test_softmax_rows_sum_to_one(rng):
    p = softmax(rng.normal(size=(10, 5)) * 50)
    np.testing.assert_allclose(p.sum(axis=-1), 1.0, rtol=0, atol=1e-12)


def test_softmax_xent_gradient(rng):
    logits = rng.normal(size=(5, 4))
    labels = rng.integers(0, 4, size=5)
    loss, g = softmax_xent(logits, labels)
    assert_grad_close(g, numeric_grad(lambda: softmax_xent(logits, labels)[0], logits))


def test_softmax_xent_label_range():
    with pytest.raises(DataError):
        softmax_xent(np.zeros((2, 3)), np.array([0, 3]))
