"""Feed-forward layers with hand-written backward passes.

Feature sequences are arrays shaped ``(..., T, D)``: frames on the second to
last axis, features on the last. Leading axes hold utterances of equal length.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, ShapeError
from .tensor import DTYPE, glorot_init

ACTIVATIONS = ("relu", "linear")


@dataclass
class DenseLayer:
    W: np.ndarray  # (out, in)
    b: np.ndarray  # (out,)
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        self.W = np.asarray(self.W, dtype=DTYPE)
        self.b = np.asarray(self.b, dtype=DTYPE)
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise ShapeError(f"bias {self.b.shape} does not match weights {self.W.shape}")

    @property
    def in_dim(self) -> int:
        return self.W.shape[1]

    @property
    def out_dim(self) -> int:
        return self.W.shape[0]

    @classmethod
    def init(cls, rng, in_dim: int, out_dim: int, activation: str = "relu") -> "DenseLayer":
        return cls(glorot_init(rng, in_dim, out_dim), np.zeros(out_dim), activation)


@dataclass
class LayerGradients:
    dW: np.ndarray
    db: np.ndarray
    dinput: np.ndarray


@dataclass(frozen=True)
class DeltaConfig:
    """Regression window (frames each side); edges are replicated."""

    window: int = 2

    def __post_init__(self):
        if self.window < 1:
            raise ValueError(f"delta window must be >= 1, got {self.window}")


def relu(x):
    return np.maximum(x, 0.0)


def _check_in(layer: DenseLayer, x: np.ndarray) -> None:
    if x.shape[-1] != layer.in_dim:
        raise ShapeError(f"input dim {x.shape[-1]} does not match layer input {layer.in_dim}")


def dense_forward(layer: DenseLayer, x) -> np.ndarray:
    x = np.asarray(x, dtype=DTYPE)
    _check_in(layer, x)
    z = x @ layer.W.T + layer.b
    return relu(z) if layer.activation == "relu" else z


def dense_backward(layer: DenseLayer, x, dout) -> LayerGradients:
    x = np.asarray(x, dtype=DTYPE)
    dout = np.asarray(dout, dtype=DTYPE)
    _check_in(layer, x)
    if dout.shape != x.shape[:-1] + (layer.out_dim,):
        raise ShapeError(f"output gradient {dout.shape} does not match forward output")
    if layer.activation == "relu":
        dz = dout * ((x @ layer.W.T + layer.b) > 0)
    else:
        dz = dout
    x2 = x.reshape(-1, layer.in_dim)
    dz2 = dz.reshape(-1, layer.out_dim)
    return LayerGradients(dz2.T @ x2, dz2.sum(axis=0), dz @ layer.W)


# -- temporal derivatives -------------------------------------------------------

def _norm(window: int) -> float:
    return 2.0 * sum(t * t for t in range(1, window + 1))


def _delta(x: np.ndarray, window: int) -> np.ndarray:
    T = x.shape[-2]
    idx = np.arange(T)
    out = np.zeros_like(x)
    for theta in range(1, window + 1):
        ahead = np.minimum(idx + theta, T - 1)
        behind = np.maximum(idx - theta, 0)
        out += theta * (x[..., ahead, :] - x[..., behind, :])
    return out / _norm(window)


def _delta_adjoint(u: np.ndarray, window: int) -> np.ndarray:
    T = u.shape[-2]
    idx = np.arange(T)
    # frames move to axis 0 so np.add.at can scatter along it
    uf = np.moveaxis(u, -2, 0)
    out = np.zeros_like(uf)
    for theta in range(1, window + 1):
        np.add.at(out, np.minimum(idx + theta, T - 1), theta * uf)
        np.add.at(out, np.maximum(idx - theta, 0), -theta * uf)
    return np.moveaxis(out, 0, -2) / _norm(window)


def delta_forward(cfg: DeltaConfig, x) -> np.ndarray:
    """Append first and second regression derivatives: ``[x | dx | ddx]``."""
    x = np.asarray(x, dtype=DTYPE)
    if x.ndim < 2 or x.shape[-2] < 1:
        raise DataError("delta features need at least one frame")
    d1 = _delta(x, cfg.window)
    d2 = _delta(d1, cfg.window)
    return np.concatenate([x, d1, d2], axis=-1)


def delta_backward(cfg: DeltaConfig, dout) -> np.ndarray:
    dout = np.asarray(dout, dtype=DTYPE)
    if dout.shape[-1] % 3:
        raise ShapeError(f"delta output gradient width {dout.shape[-1]} is not a multiple of 3")
    d = dout.shape[-1] // 3
    u0, u1, u2 = dout[..., :d], dout[..., d:2 * d], dout[..., 2 * d:]
    return u0 + _delta_adjoint(u1 + _delta_adjoint(u2, cfg.window), cfg.window)


# -- output ---------------------------------------------------------------------

def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=DTYPE)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_xent(logits, labels):
    """Mean cross-entropy over all frames and its gradient w.r.t. the logits.

    ``labels`` has the shape of ``logits`` without the class axis.
    """
    logits = np.asarray(logits, dtype=DTYPE)
    labels = np.asarray(labels)
    C = logits.shape[-1]
    if labels.shape != logits.shape[:-1]:
        raise ShapeError(f"labels {labels.shape} do not match logits {logits.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= C):
        raise DataError(f"labels must lie in [0, {C})")
    z = logits - logits.max(axis=-1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    onehot = np.zeros_like(logits)
    np.put_along_axis(onehot, labels[..., None], 1.0, axis=-1)
    n = labels.size
    loss = -float((logp * onehot).sum()) / n
    return loss, (np.exp(logp) - onehot) / n
