"""Adam, LSTM gradient clipping, early stopping and the two-phase schedule."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, TrainingError
from .evaluation import (confusion_matrix, evaluate, frame_labels, group_by_length, metrics,
                         stack_inputs)
from .layers import softmax, softmax_xent
from .model import FramePredictions, FusionModel, backward, forward, is_lstm_param, majority_vote

log = logging.getLogger(__name__)


@dataclass
class AdamState:
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(state: AdamState, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
    """Bias-corrected Adam update applied to ``params`` in place."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient in {name}")
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"{name}: gradient {g.shape} vs parameter {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


def clip_lstm_gradients(grads: dict[str, np.ndarray], threshold: float,
                        is_lstm=is_lstm_param) -> dict[str, np.ndarray]:
    """Rescale each LSTM block whose L2 norm exceeds ``threshold``; others pass through."""
    if threshold <= 0:
        raise ValueError("clip threshold must be positive")
    out = {}
    for name, g in grads.items():
        norm = float(np.sqrt(np.sum(g * g))) if is_lstm(name) else 0.0
        out[name] = g * (threshold / norm) if norm > threshold else g
    return out


@dataclass(frozen=True)
class TrainConfig:
    batch_utterances: int = 10
    lr_stream: float = 0.0003
    lr_fusion: float = 0.0001
    early_stop_delay: int = 5
    clip_threshold: float = 5.0
    max_epochs: int = 100

    def __post_init__(self):
        if (self.batch_utterances < 1 or self.lr_stream < 0 or self.lr_fusion < 0
                or self.early_stop_delay < 1 or self.clip_threshold <= 0 or self.max_epochs < 0):
            raise ConfigError(f"invalid training configuration {self}")


class EarlyStopping:
    """Track the best validation loss and signal a stop after ``delay`` flat epochs."""

    def __init__(self, delay: int = 5):
        self.delay = delay
        self.best_loss = math.inf
        self.best_epoch = 0
        self.best_state: dict[str, np.ndarray] | None = None
        self.since_improvement = 0

    def update(self, epoch: int, loss: float, model: FusionModel | None = None) -> bool:
        if loss < self.best_loss:
            self.best_loss, self.best_epoch, self.since_improvement = loss, epoch, 0
            if model is not None:
                self.best_state = {k: v.copy() for k, v in model.parameters().items()}
        else:
            self.since_improvement += 1
        return self.since_improvement >= self.delay


LOG_FIELDS = ("epoch", "split", "loss", "cr", "uar", "mean_f1")


def batch_gradients(model: FusionModel, examples, idx):
    """Mean over utterances of mean-over-frames cross-entropy, and its gradients."""
    total_loss, grads, preds = 0.0, None, {}
    for group in group_by_length(idx, examples):
        weight = len(group) / len(idx)
        logits, cache = forward(model, stack_inputs(model, examples, group))
        loss, dlogits = softmax_xent(logits, frame_labels(examples, group))
        g = backward(model, cache, dlogits * weight)
        total_loss += weight * loss
        grads = g if grads is None else {k: grads[k] + g[k] for k in grads}
        post = softmax(logits)
        for j, i in enumerate(group):
            preds[i] = majority_vote(FramePredictions(post[j]))
    return total_loss, grads, preds


def fit(model: FusionModel, train, validation, cfg: TrainConfig, learning_rate: float, rng,
        name: str = "model"):
    """Mini-batch Adam with LSTM clipping and early stopping on validation loss.

    Returns the model restored to its best validation epoch and the per-epoch log.
    """
    if not train or not validation:
        raise ValueError("training and validation splits must be non-empty")
    adam = AdamState(learning_rate)
    stopper = EarlyStopping(cfg.early_stop_delay)
    history: list[dict] = []
    params = model.parameters()
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(train))
        losses, preds = [], {}
        for start in range(0, len(order), cfg.batch_utterances):
            idx = [int(i) for i in order[start:start + cfg.batch_utterances]]
            loss, grads, p = batch_gradients(model, train, idx)
            if not math.isfinite(loss):
                raise TrainingError(f"{name}: non-finite training loss at epoch {epoch}")
            adam_step(adam, params, clip_lstm_gradients(grads, cfg.clip_threshold))
            losses.append(loss * len(idx))
            preds.update(p)
        cm = confusion_matrix([e.label for e in train], [preds[i] for i in range(len(train))],
                              model.n_classes)
        history.append(_log_row(epoch, "train", sum(losses) / len(train), metrics(cm)))
        val = evaluate(model, validation)
        if not math.isfinite(val.loss):
            raise TrainingError(f"{name}: non-finite validation loss at epoch {epoch}")
        history.append(_log_row(epoch, "validation", val.loss, val.metrics))
        log.info("%s epoch %d train %.4f val %.4f val CR %.3f", name, epoch,
                 history[-2]["loss"], val.loss, val.metrics.cr)
        if stopper.update(epoch, val.loss, model):
            log.info("%s early stop at epoch %d (best %d)", name, epoch, stopper.best_epoch)
            break
    if stopper.best_state is not None:
        model.load_state(stopper.best_state)
    return model, history


def _log_row(epoch, split, loss, m) -> dict:
    return {"epoch": epoch, "split": split, "loss": loss, "cr": m.cr, "uar": m.uar,
            "mean_f1": m.mean_f1}


def write_log(path, history) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, LOG_FIELDS, lineterminator="\n")
        w.writeheader()
        for row in history:
            w.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in row.items()})


def train_stream(model: FusionModel, train, validation, cfg: TrainConfig, rng):
    """Phase one: a single modality stream with its own softmax output."""
    if model.fusion is not None or len(model.streams) != 1:
        raise ConfigError("train_stream expects a single-stream model")
    _check_inputs(model, train)
    return fit(model, train, validation, cfg, cfg.lr_stream, rng, name=model.names[0])


def train_fusion(model: FusionModel, train, validation, cfg: TrainConfig, rng):
    """Phase two: joint fine-tuning of pretrained streams plus the fusion BLSTM."""
    if model.fusion is None:
        raise ConfigError("train_fusion expects a model with a fusion BLSTM")
    _check_inputs(model, train)
    return fit(model, train, validation, cfg, cfg.lr_fusion, rng, name="fusion")


def _check_inputs(model: FusionModel, examples) -> None:
    for name, stream in zip(model.names, model.streams):
        if not examples:
            return
        x = examples[0].inputs.get(name)
        if x is None or x.shape[-1] != stream.input_dim:
            got = None if x is None else x.shape[-1]
            raise ConfigError(f"stream {name!r} expects {stream.input_dim}-dim inputs, data has {got}")
