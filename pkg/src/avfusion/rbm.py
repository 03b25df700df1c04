"""Gaussian-visible RBMs, CD-1 training and greedy layer-wise pretraining.

Visible units are linear with unit variance, so inputs must be z-normalised.
Hidden units are either noisy rectified linear (sample ``max(0, x + n)`` with
``n ~ N(0, logistic(x))``) or linear with unit-variance Gaussian noise.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import TrainingError
from .layers import DenseLayer
from .tensor import DTYPE

log = logging.getLogger(__name__)

HIDDEN_KINDS = ("noisy-relu", "linear")


@dataclass
class GaussianRbm:
    W: np.ndarray  # (visible, hidden)
    vbias: np.ndarray
    hbias: np.ndarray
    hidden_kind: str = "noisy-relu"

    def __post_init__(self):
        if self.hidden_kind not in HIDDEN_KINDS:
            raise ValueError(f"unknown hidden kind {self.hidden_kind!r}")

    @classmethod
    def init(cls, rng, n_visible: int, n_hidden: int, hidden_kind: str = "noisy-relu",
             weight_std: float = 0.01) -> "GaussianRbm":
        return cls(rng.normal(0.0, weight_std, size=(n_visible, n_hidden)),
                   np.zeros(n_visible), np.zeros(n_hidden), hidden_kind)

    def copy(self) -> "GaussianRbm":
        return GaussianRbm(self.W.copy(), self.vbias.copy(), self.hbias.copy(), self.hidden_kind)

    def hidden_mean(self, v: np.ndarray) -> np.ndarray:
        pre = v @ self.W + self.hbias
        return np.maximum(pre, 0.0) if self.hidden_kind == "noisy-relu" else pre

    def sample_hidden(self, v: np.ndarray, rng) -> np.ndarray:
        pre = v @ self.W + self.hbias
        if self.hidden_kind == "noisy-relu":
            std = np.sqrt(1.0 / (1.0 + np.exp(-pre)))
            return np.maximum(pre + std * rng.standard_normal(pre.shape), 0.0)
        return pre + rng.standard_normal(pre.shape)

    def visible_mean(self, h: np.ndarray) -> np.ndarray:
        return h @ self.W.T + self.vbias

    def to_dense(self) -> DenseLayer:
        activation = "relu" if self.hidden_kind == "noisy-relu" else "linear"
        return DenseLayer(self.W.T.copy(), self.hbias.copy(), activation)


@dataclass(frozen=True)
class CdConfig:
    epochs: int = 20
    batch_size: int = 100
    l2: float = 0.0002
    learning_rate: float = 0.001
    cd_steps: int = 1

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.l2 < 0 or self.learning_rate < 0:
            raise ValueError(f"invalid CD configuration {self}")
        if self.cd_steps != 1:
            raise ValueError("only one-step contrastive divergence is supported")


@dataclass
class CdGradients:
    W_data: np.ndarray  # positive minus negative statistics, batch-averaged
    W_decay: np.ndarray
    vbias: np.ndarray
    hbias: np.ndarray
    reconstruction_error: float


def cd1_gradients(rbm: GaussianRbm, batch: np.ndarray, l2: float, rng) -> CdGradients:
    v0 = np.asarray(batch, dtype=DTYPE)
    n = v0.shape[0]
    h0 = rbm.hidden_mean(v0)
    v1 = rbm.visible_mean(rbm.sample_hidden(v0, rng))
    h1 = rbm.hidden_mean(v1)
    return CdGradients(
        W_data=(v0.T @ h0 - v1.T @ h1) / n,
        W_decay=-l2 * rbm.W,
        vbias=(v0 - v1).mean(axis=0),
        hbias=(h0 - h1).mean(axis=0),
        reconstruction_error=float(np.mean((v0 - v1) ** 2)),
    )


def cd1_update(rbm: GaussianRbm, batch: np.ndarray, cfg: CdConfig, rng,
               where: str = "") -> tuple[GaussianRbm, float]:
    """One CD-1 step. Returns the updated RBM and the batch reconstruction error."""
    with np.errstate(over="ignore", invalid="ignore"):
        g = cd1_gradients(rbm, batch, cfg.l2, rng)
        lr = cfg.learning_rate
        out = GaussianRbm(rbm.W + lr * (g.W_data + g.W_decay), rbm.vbias + lr * g.vbias,
                          rbm.hbias + lr * g.hbias, rbm.hidden_kind)
    if not (np.isfinite(g.reconstruction_error) and np.all(np.isfinite(out.W))
            and np.all(np.isfinite(out.vbias)) and np.all(np.isfinite(out.hbias))):
        raise TrainingError(f"RBM update diverged{where}")
    return out, g.reconstruction_error


def train_rbm(rbm: GaussianRbm, data: np.ndarray, cfg: CdConfig, rng,
              name: str = "rbm") -> tuple[GaussianRbm, list[float]]:
    """Run ``cfg.epochs`` epochs of shuffled mini-batch CD-1.

    Returns the trained RBM and the mean reconstruction error of every epoch.
    """
    data = np.asarray(data, dtype=DTYPE)
    history = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(data))
        errors = []
        for k, start in enumerate(range(0, len(data), cfg.batch_size)):
            batch = data[order[start:start + cfg.batch_size]]
            rbm, err = cd1_update(rbm, batch, cfg, rng, where=f" ({name}, epoch {epoch}, batch {k})")
            errors.append(err)
        history.append(float(np.mean(errors)))
        log.debug("%s epoch %d reconstruction error %.5f", name, epoch, history[-1])
    return rbm, history


def pretrain_stack(layer_sizes, data, cfg: CdConfig, rng, history: list | None = None,
                   ) -> list[DenseLayer]:
    """Greedily train one RBM per encoder layer and return the dense initialisations.

    The final layer is the linear bottleneck; the rest are noisy-ReLU RBMs. Each
    RBM trains on the mean hidden activity of the one below, z-normalised so the
    unit-variance visible model holds; that normalisation is folded into the
    returned dense weights, so the encoder consumes raw activities. ``data``
    itself must already be z-normalised. Per-layer epoch errors are appended to
    ``history`` when given.
    """
    x = np.asarray(data, dtype=DTYPE)
    mean, std = np.zeros(x.shape[1]), np.ones(x.shape[1])
    layers = []
    for k, size in enumerate(layer_sizes):
        kind = "linear" if k == len(layer_sizes) - 1 else "noisy-relu"
        rbm = GaussianRbm.init(rng, x.shape[1], size, kind)
        rbm, errs = train_rbm(rbm, x, cfg, rng, name=f"rbm{k}")
        if history is not None:
            history.append(errs)
        layers.append(fold_normalization(rbm, mean, std) if k else rbm.to_dense())
        if k < len(layer_sizes) - 1:
            x, mean, std = znormalize(rbm.hidden_mean(x))
    return layers


def fold_normalization(rbm: GaussianRbm, mean, std) -> DenseLayer:
    """Dense layer computing the RBM's hidden mean of ``(x - mean) / std`` from raw x."""
    layer = rbm.to_dense()
    layer.W = layer.W / std
    layer.b = layer.b - layer.W @ mean
    return layer


def znormalize(data) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-column z-scores with population std; constant columns map to 0 (std 1)."""
    data = np.asarray(data, dtype=DTYPE)
    if data.ndim != 2 or data.shape[0] < 2:
        raise ValueError("z-normalisation needs a matrix with at least 2 rows")
    mean = data.mean(axis=0)
    std = data.std(axis=0)
    constant = np.ptp(data, axis=0) == 0
    std[constant] = 1.0
    out = (data - mean) / std
    out[:, constant] = 0.0
    return out, mean, std
