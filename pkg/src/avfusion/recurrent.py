"""LSTM and bidirectional LSTM with explicit backpropagation through time.

Gates are stacked along the last axis of the parameters in the order
input, forget, cell candidate, output. No peepholes. Inputs are ``(T, D)`` or
batched ``(B, T, D)`` with equal-length utterances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .tensor import DTYPE, glorot_init

GATES = ("input", "forget", "cell", "output")


@dataclass
class LstmParams:
    W: np.ndarray  # (D, 4H) input weights
    U: np.ndarray  # (H, 4H) recurrent weights
    b: np.ndarray  # (4H,)

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=DTYPE)
        self.U = np.asarray(self.U, dtype=DTYPE)
        self.b = np.asarray(self.b, dtype=DTYPE)
        H = self.U.shape[0]
        if self.U.shape != (H, 4 * H) or self.W.shape[1] != 4 * H or self.b.shape != (4 * H,):
            raise ShapeError(
                f"inconsistent LSTM shapes W{self.W.shape} U{self.U.shape} b{self.b.shape}")

    @property
    def input_size(self) -> int:
        return self.W.shape[0]

    @property
    def hidden_size(self) -> int:
        return self.U.shape[0]

    @classmethod
    def init(cls, rng, input_size: int, hidden_size: int, forget_bias: float = 1.0):
        H = hidden_size
        W = np.concatenate([glorot_init(rng, input_size, H).T for _ in GATES], axis=1)
        U = np.concatenate([glorot_init(rng, H, H).T for _ in GATES], axis=1)
        b = np.zeros(4 * H)
        b[H:2 * H] = forget_bias
        return cls(W, U, b)

    @classmethod
    def zeros(cls, input_size: int, hidden_size: int):
        H = hidden_size
        return cls(np.zeros((input_size, 4 * H)), np.zeros((H, 4 * H)), np.zeros(4 * H))

    def gate(self, name: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Views ``(W_k, U_k, b_k)`` for one gate."""
        H = self.hidden_size
        k = GATES.index(name)
        s = slice(k * H, (k + 1) * H)
        return self.W[:, s], self.U[:, s], self.b[s]


@dataclass
class BlstmParams:
    forward: LstmParams
    backward: LstmParams

    def __post_init__(self):
        if (self.forward.input_size, self.forward.hidden_size) != \
                (self.backward.input_size, self.backward.hidden_size):
            raise ShapeError("BLSTM directions must share input and hidden sizes")

    @property
    def input_size(self) -> int:
        return self.forward.input_size

    @property
    def hidden_size(self) -> int:
        return self.forward.hidden_size

    @property
    def output_size(self) -> int:
        return 2 * self.forward.hidden_size

    @classmethod
    def init(cls, rng, input_size: int, hidden_size: int):
        return cls(LstmParams.init(rng, input_size, hidden_size),
                   LstmParams.init(rng, input_size, hidden_size))

    @classmethod
    def zeros(cls, input_size: int, hidden_size: int):
        return cls(LstmParams.zeros(input_size, hidden_size),
                   LstmParams.zeros(input_size, hidden_size))


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _batched(x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=DTYPE)
    if x.ndim == 2:
        return x[None], True
    if x.ndim != 3:
        raise ShapeError(f"expected (T, D) or (B, T, D) input, got shape {x.shape}")
    return x, False


def lstm_forward(p: LstmParams, x):
    """Run the cell over time from zero state. Returns ``(h, cache)``."""
    x, squeeze = _batched(x)
    B, T, D = x.shape
    if D != p.input_size:
        raise ShapeError(f"input dim {D} does not match LSTM input size {p.input_size}")
    H = p.hidden_size
    xa = x @ p.W + p.b  # input contribution to every gate, all frames at once
    gates = np.empty((B, T, 4 * H))
    c = np.empty((B, T, H))
    h = np.empty((B, T, H))
    h_prev = np.zeros((B, H))
    c_prev = np.zeros((B, H))
    for t in range(T):
        a = xa[:, t] + h_prev @ p.U
        g = gates[:, t]
        g[:, :2 * H] = _sigmoid(a[:, :2 * H])
        g[:, 2 * H:3 * H] = np.tanh(a[:, 2 * H:3 * H])
        g[:, 3 * H:] = _sigmoid(a[:, 3 * H:])
        c_prev = g[:, H:2 * H] * c_prev + g[:, :H] * g[:, 2 * H:3 * H]
        h_prev = g[:, 3 * H:] * np.tanh(c_prev)
        c[:, t] = c_prev
        h[:, t] = h_prev
    cache = (x, gates, c, h, squeeze)
    return (h[0] if squeeze else h), cache


def lstm_backward(p: LstmParams, cache, dh):
    """Backpropagate through time. Returns ``(LstmParams of gradients, dx)``."""
    x, gates, c, h, squeeze = cache
    dh = np.asarray(dh, dtype=DTYPE)
    if squeeze:
        dh = dh[None]
    if dh.shape != h.shape:
        raise ShapeError(f"hidden gradient {dh.shape} does not match forward output {h.shape}")
    B, T, H = h.shape
    da = np.empty_like(gates)
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    tanh_c = np.tanh(c)
    for t in range(T - 1, -1, -1):
        g = gates[:, t]
        i, f, gg, o = g[:, :H], g[:, H:2 * H], g[:, 2 * H:3 * H], g[:, 3 * H:]
        dht = dh[:, t] + dh_next
        dc = dht * o * (1.0 - tanh_c[:, t] ** 2) + dc_next
        c_prev = c[:, t - 1] if t > 0 else 0.0
        d = da[:, t]
        d[:, :H] = dc * gg * i * (1.0 - i)
        d[:, H:2 * H] = dc * c_prev * f * (1.0 - f)
        d[:, 2 * H:3 * H] = dc * i * (1.0 - gg ** 2)
        d[:, 3 * H:] = dht * tanh_c[:, t] * o * (1.0 - o)
        dc_next = dc * f
        dh_next = d @ p.U.T
    h_prev = np.concatenate([np.zeros((B, 1, H)), h[:, :-1]], axis=1)
    da2 = da.reshape(-1, 4 * H)
    grads = LstmParams(x.reshape(-1, x.shape[-1]).T @ da2,
                       h_prev.reshape(-1, H).T @ da2,
                       da2.sum(axis=0))
    dx = da @ p.W.T
    return grads, (dx[0] if squeeze else dx)


def blstm_forward(p: BlstmParams, x):
    """Concatenate forward-time and re-reversed backward-time hidden states."""
    x = np.asarray(x, dtype=DTYPE)
    hf, cf = lstm_forward(p.forward, x)
    hb, cb = lstm_forward(p.backward, np.flip(x, axis=-2))
    return np.concatenate([hf, np.flip(hb, axis=-2)], axis=-1), (cf, cb)


def blstm_backward(p: BlstmParams, cache, dout):
    cf, cb = cache
    dout = np.asarray(dout, dtype=DTYPE)
    H = p.hidden_size
    if dout.shape[-1] != 2 * H:
        raise ShapeError(f"BLSTM output gradient width {dout.shape[-1]} != {2 * H}")
    gf, dxf = lstm_backward(p.forward, cf, dout[..., :H])
    gb, dxb = lstm_backward(p.backward, cb, np.flip(dout[..., H:], axis=-2))
    return BlstmParams(gf, gb), dxf + np.flip(dxb, axis=-2)
