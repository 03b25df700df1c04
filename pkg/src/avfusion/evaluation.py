"""Confusion-matrix metrics, multi-run aggregation and noise sweeps."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .layers import softmax, softmax_xent
from .model import FramePredictions, forward, majority_vote


@dataclass(frozen=True)
class Metrics:
    cr: float
    uar: float
    mean_f1: float


def confusion_matrix(true, pred, n_classes: int) -> np.ndarray:
    """Counts with rows = true class, columns = predicted class."""
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(true, dtype=int), np.asarray(pred, dtype=int)), 1)
    return cm


def metrics(cm) -> Metrics:
    """Classification rate, unweighted average recall and macro F1.

    Empty rows give recall 0 and classes with precision + recall = 0 give F1 0.
    """
    cm = np.asarray(cm)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1] or cm.size == 0 or cm.sum() < 1:
        raise ValueError("metrics need a non-empty square confusion matrix with total >= 1")
    tp = np.diag(cm).astype(float)
    rows, cols = cm.sum(axis=1), cm.sum(axis=0)
    recall = np.divide(tp, rows, out=np.zeros_like(tp), where=rows > 0)
    precision = np.divide(tp, cols, out=np.zeros_like(tp), where=cols > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0)
    return Metrics(float(tp.sum() / cm.sum()), float(recall.mean()), float(f1.mean()))


@dataclass(frozen=True)
class RunReport:
    runs: tuple[Metrics, ...]
    mean: Metrics
    std: Metrics


def _mean_std(values: list[float]) -> tuple[float, float]:
    n = len(values)
    mean = math.fsum(values) / n
    if n == 1:
        return mean, 0.0
    return mean, math.sqrt(math.fsum((v - mean) ** 2 for v in values) / (n - 1))


def aggregate_runs(runs) -> RunReport:
    """Mean and sample (n - 1) standard deviation of each metric; std 0 for one run."""
    runs = tuple(runs)
    if not runs:
        raise ValueError("cannot aggregate zero runs")
    stats = {f: _mean_std(sorted(getattr(r, f) for r in runs)) for f in ("cr", "uar", "mean_f1")}
    return RunReport(runs, Metrics(**{f: s[0] for f, s in stats.items()}),
                     Metrics(**{f: s[1] for f, s in stats.items()}))


REPORT_FIELDS = ("snr_db", "stream", "cr_mean", "cr_std", "uar_mean", "uar_std", "f1_mean", "f1_std")


def report_row(snr, stream: str, report: RunReport) -> dict:
    m, s = report.mean, report.std
    return {"snr_db": "clean" if snr is None else f"{snr:g}", "stream": stream,
            "cr_mean": f"{m.cr:.6f}", "cr_std": f"{s.cr:.6f}",
            "uar_mean": f"{m.uar:.6f}", "uar_std": f"{s.uar:.6f}",
            "f1_mean": f"{m.mean_f1:.6f}", "f1_std": f"{s.mean_f1:.6f}"}


def write_report(path, rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, REPORT_FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def format_table(rows) -> str:
    """Console rendering in percent with std in parentheses."""
    lines = [f"{'SNR':>6}  {'stream':<12} {'Mean F1':>13} {'UAR':>13} {'CR':>13}"]
    for r in rows:
        cells = [f"{100 * float(r[k + '_mean']):5.1f} ({100 * float(r[k + '_std']):4.1f})"
                 for k in ("f1", "uar", "cr")]
        lines.append(f"{r['snr_db']:>6}  {r['stream']:<12} " + " ".join(f"{c:>13}" for c in cells))
    return "\n".join(lines)


# -- model evaluation -----------------------------------------------------------------

@dataclass
class EvalResult:
    loss: float  # mean over utterances of per-frame cross-entropy
    confusion: np.ndarray
    predictions: list[int]

    @property
    def metrics(self) -> Metrics:
        return metrics(self.confusion)


def group_by_length(indices, examples) -> list[list[int]]:
    """Split indices into equal-length groups, keeping first-seen order."""
    groups: dict[int, list[int]] = {}
    for i in indices:
        groups.setdefault(examples[i].n_frames, []).append(i)
    return list(groups.values())


def stack_inputs(model, examples, idx):
    return [np.stack([examples[i].inputs[name] for i in idx]) for name in model.names]


def frame_labels(examples, idx) -> np.ndarray:
    """Every frame carries its utterance's label."""
    return np.array([[examples[i].label] * examples[i].n_frames for i in idx])


def evaluate(model, examples) -> EvalResult:
    """Frame posteriors, utterance majority votes and loss over ``examples``."""
    if not examples:
        raise ValueError("cannot evaluate an empty split")
    preds = [0] * len(examples)
    total = 0.0
    for idx in group_by_length(range(len(examples)), examples):
        logits, _ = forward(model, stack_inputs(model, examples, idx))
        loss, _ = softmax_xent(logits, frame_labels(examples, idx))
        post = softmax(logits)
        total += loss * len(idx)
        for j, i in enumerate(idx):
            preds[i] = majority_vote(FramePredictions(post[j]))
    cm = confusion_matrix([e.label for e in examples], preds, model.n_classes)
    return EvalResult(total / len(examples), cm, preds)


def snr_sweep(models: dict, root, rows, noise, levels, spectrogram_cfg, seed: int,
              runs: int = 1) -> list[dict]:
    """Evaluate named models on clean and noise-mixed test audio.

    ``models`` maps a row label to a model or to a list with one model per run.
    ``levels`` holds SNRs in dB; ``None`` is the clean condition, which applies no
    mixing at all. Noisy run ``r`` draws its per-utterance noise offsets from
    ``seed + r``; video is never altered. Returns rows in ``REPORT_FIELDS`` layout.
    """
    from .datapipe import load_examples
    from .tensor import make_rng

    models = {k: (v if isinstance(v, (list, tuple)) else [v]) for k, v in models.items()}
    out = []
    clean = None
    for snr in levels:
        n_runs = max(len(v) for v in models.values()) if snr is None else runs
        per_model: dict[str, list[Metrics]] = {name: [] for name in models}
        for run in range(n_runs):
            if snr is None:
                clean = clean or load_examples(root, rows, spectrogram_cfg)
                examples = clean
            else:
                examples = load_examples(root, rows, spectrogram_cfg, noise, snr,
                                         make_rng(seed + run))
            for name, ms in models.items():
                m = ms[run] if len(ms) > 1 else ms[0]
                per_model[name].append(evaluate(m, examples).metrics)
        for name in models:
            out.append(report_row(snr, name, aggregate_runs(per_model[name])))
    return out
