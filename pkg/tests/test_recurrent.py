import math

import numpy as np
import pytest

from avfusion.errors import ShapeError
from avfusion.recurrent import (BlstmParams, LstmParams, blstm_backward, blstm_forward,
                                lstm_backward, lstm_forward)
from avfusion.tensor import make_rng

from conftest import assert_grad_close, numeric_grad


def sig(z):
    return 1 / (1 + math.exp(-z))


def random_lstm(rng, D, H, scale=0.5):
    return LstmParams(rng.normal(size=(D, 4 * H)) * scale, rng.normal(size=(H, 4 * H)) * scale,
                      rng.normal(size=4 * H) * scale)


def test_zero_params_give_zero_output(rng):
    h, _ = lstm_forward(LstmParams.zeros(3, 4), rng.normal(size=(5, 3)))
    np.testing.assert_array_equal(h, 0.0)
    out, _ = blstm_forward(BlstmParams.zeros(3, 4), rng.normal(size=(5, 3)))
    np.testing.assert_array_equal(out, 0.0)


def test_single_frame_hand_evaluation():
    wi, wf, wg, wo = 0.3, -0.7, 1.1, 0.5
    bi, bf, bg, bo = 0.1, 1.0, -0.2, 0.05
    p = LstmParams([[wi, wf, wg, wo]], [[0.9, -0.4, 0.2, 0.6]], [bi, bf, bg, bo])
    x = 0.8
    i, o = sig(wi * x + bi), sig(wo * x + bo)
    g = math.tanh(wg * x + bg)
    c = i * g  # forget gate multiplies c0 = 0
    h_expected = o * math.tanh(c)
    h, _ = lstm_forward(p, [[x]])
    assert abs(h[0, 0] - h_expected) < 1e-12

    _, dx = lstm_backward(p, lstm_forward(p, [[x]])[1], [[1.0]])
    dc = o * (1 - math.tanh(c) ** 2)
    dx_expected = (o * (1 - o) * wo * math.tanh(c)
                   + dc * (i * (1 - i) * wi * g + i * (1 - g * g) * wg))
    assert abs(dx[0, 0] - dx_expected) < 1e-12


def test_length_one_equals_step_from_zero_state(rng):
    p = random_lstm(rng, 3, 2)
    x = rng.normal(size=(1, 3))
    h, _ = lstm_forward(p, x)
    a = x[0] @ p.W + p.b
    i, f, o = (1 / (1 + np.exp(-a[k * 2:(k + 1) * 2])) for k in (0, 1, 3))
    g = np.tanh(a[4:6])
    np.testing.assert_allclose(h[0], o * np.tanh(i * g), rtol=0, atol=1e-14)


def test_lstm_backward_zero_cotangent(rng):
    p = random_lstm(rng, 3, 2)
    h, cache = lstm_forward(p, rng.normal(size=(4, 3)))
    grads, dx = lstm_backward(p, cache, np.zeros_like(h))
    for a in (grads.W, grads.U, grads.b, dx):
        assert not a.any()


@pytest.mark.parametrize("T", [1, 4, 6])
def test_lstm_backward_finite_differences(rng, T):
    p = random_lstm(rng, 3, 4)
    x = rng.normal(size=(T, 3))
    u = rng.normal(size=(T, 4))
    f = lambda: float((lstm_forward(p, x)[0] * u).sum())
    grads, dx = lstm_backward(p, lstm_forward(p, x)[1], u)
    assert_grad_close(grads.W, numeric_grad(f, p.W))
    assert_grad_close(grads.U, numeric_grad(f, p.U))
    assert_grad_close(grads.b, numeric_grad(f, p.b))
    assert_grad_close(dx, numeric_grad(f, x))


def test_lstm_gate_views_cover_blocks(rng):
    p = random_lstm(rng, 3, 2)
    blocks = [p.gate(g) for g in ("input", "forget", "cell", "output")]
    np.testing.assert_array_equal(np.concatenate([w for w, _, _ in blocks], axis=1), p.W)


def test_blstm_finite_differences(rng):
    p = BlstmParams(random_lstm(rng, 3, 2), random_lstm(rng, 3, 2))
    x = rng.normal(size=(5, 3))
    u = rng.normal(size=(5, 4))
    f = lambda: float((blstm_forward(p, x)[0] * u).sum())
    grads, dx = blstm_backward(p, blstm_forward(p, x)[1], u)
    for lstm, g in ((p.forward, grads.forward), (p.backward, grads.backward)):
        assert_grad_close(g.W, numeric_grad(f, lstm.W))
        assert_grad_close(g.U, numeric_grad(f, lstm.U))
        assert_grad_close(g.b, numeric_grad(f, lstm.b))
    assert_grad_close(dx, numeric_grad(f, x))


def test_blstm_matches_reversal_composition(rng):
    p = BlstmParams(random_lstm(rng, 3, 2), random_lstm(rng, 3, 2))
    x = rng.normal(size=(6, 3))
    out, _ = blstm_forward(p, x)
    hf, _ = lstm_forward(p.forward, x)
    hb, _ = lstm_forward(p.backward, x[::-1].copy())
    np.testing.assert_allclose(out, np.hstack([hf, hb[::-1]]), rtol=0, atol=1e-12)


def test_blstm_palindrome_symmetry(rng):
    lstm = random_lstm(rng, 2, 3)
    p = BlstmParams(lstm, lstm)
    half = rng.normal(size=(3, 2))
    x = np.vstack([half, half[::-1]])
    out, _ = blstm_forward(p, x)
    T = len(x)
    for t in range(T):
        np.testing.assert_allclose(out[t], np.concatenate([out[T - 1 - t, 3:], out[T - 1 - t, :3]]),
                                   atol=1e-14)


def test_batched_matches_individual(rng):
    p = BlstmParams(random_lstm(rng, 3, 2), random_lstm(rng, 3, 2))
    x = rng.normal(size=(4, 5, 3))
    out, cache = blstm_forward(p, x)
    u = rng.normal(size=out.shape)
    grads, dx = blstm_backward(p, cache, u)
    total_W = np.zeros_like(p.forward.W)
    for k in range(4):
        ok, ck = blstm_forward(p, x[k])
        np.testing.assert_allclose(out[k], ok, atol=1e-14)
        gk, dxk = blstm_backward(p, ck, u[k])
        np.testing.assert_allclose(dx[k], dxk, atol=1e-13)
        total_W += gk.forward.W
    np.testing.assert_allclose(grads.forward.W, total_W, atol=1e-12)


def test_hidden_state_bounded(rng):
    p = random_lstm(rng, 3, 5, scale=5.0)
    h, _ = lstm_forward(p, rng.normal(size=(30, 3)) * 10)
    assert np.abs(h).max() <= 1.0


def test_shape_errors(rng):
    p = random_lstm(rng, 3, 2)
    with pytest.raises(ShapeError):
        lstm_forward(p, np.zeros((4, 2)))
    with pytest.raises(ShapeError):
        BlstmParams(random_lstm(rng, 3, 2), random_lstm(rng, 3, 3))


def test_init_forget_bias_and_glorot(rng):
    p = LstmParams.init(make_rng(0), 6, 4)
    np.testing.assert_array_equal(p.b[4:8], 1.0)
    np.testing.assert_array_equal(np.delete(p.b, range(4, 8)), 0.0)
    assert np.abs(p.W).max() <= math.sqrt(6 / 10)
