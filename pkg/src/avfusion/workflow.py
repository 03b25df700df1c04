"""The end-to-end workflow behind the CLI, one function per phase.

A workspace directory holds everything a run produces::

    config.yaml                  resolved configuration (echoed by every command)
    data/manifest.csv, data/...  dataset (unless ``data`` points elsewhere)
    checkpoints/pretrain_<m>.ckpt, stream_<m>.ckpt, fusion.ckpt
    logs/*.csv                   per-epoch training logs
    reports/eval.csv             evaluation table
"""

from __future__ import annotations

import csv
import logging
import shutil
from pathlib import Path

import numpy as np

from .config import RunConfig
from .datapipe import (babble_noise, load_examples, read_manifest, read_wav, synth_dataset)
from .datapipe.features import MODALITIES
from .errors import ConfigError, DataError, DependencyError
from .evaluation import format_table, snr_sweep, write_report
from .model import FusionModel, StreamParams, load_checkpoint, load_stream, save_checkpoint
from .rbm import pretrain_stack, znormalize
from .tensor import make_rng
from .training import train_fusion, train_stream, write_log

log = logging.getLogger(__name__)

PHASES = ("synth", "pretrain-audio", "pretrain-video", "stream-audio", "stream-video", "fusion",
          "eval")
STREAM_LABELS = {"audio": "audio", "video": "video", "fusion": "audio+video"}


class OutputExists(DependencyError):
    exit_code = 7


def phase_rng(seed: int, phase: str) -> np.random.Generator:
    """Independent, reproducible stream per phase so commands can run separately."""
    return make_rng((seed * 1_000_003 + PHASES.index(phase) + 1) % 2**64)


class Workspace:
    def __init__(self, out, cfg: RunConfig):
        self.root = Path(out)
        self.cfg = cfg
        self.data = Path(cfg.data) if cfg.data else self.root / "data"

    def ckpt(self, name: str) -> Path:
        return self.root / "checkpoints" / f"{name}.ckpt"

    def log_path(self, name: str) -> Path:
        return self.root / "logs" / f"{name}.csv"

    def prepare(self) -> None:
        for sub in ("checkpoints", "logs", "reports"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)
        (self.root / "config.yaml").write_text(self.cfg.dump())

    def require(self, path: Path, phase: str) -> Path:
        if not path.exists():
            raise DependencyError(f"missing {path}; run the '{phase}' phase first")
        return path

    def claim(self, path: Path, force: bool) -> None:
        if path.exists() and not force:
            raise OutputExists(f"{path} exists; pass --force to overwrite")

    def rows(self, split: str | None = None):
        manifest = self.require(self.data / "manifest.csv", "synth")
        rows = read_manifest(manifest)
        return [r for r in rows if split is None or r.split == split]

    def examples(self, split: str):
        rows = self.rows(split)
        if not rows:
            raise DataError(f"the {split} split is empty")
        return load_examples(self.data, rows, self.cfg.spectrogram)


def synth(ws: Workspace, force: bool = False) -> dict:
    data = ws.data
    if data.exists() and any(data.iterdir()):
        if not force:
            raise OutputExists(f"{data} is not empty; pass --force to regenerate")
        shutil.rmtree(data)
    data.mkdir(parents=True, exist_ok=True)
    ws.prepare()
    rows = synth_dataset(ws.cfg.synth, data, phase_rng(ws.cfg.seed, "synth"))
    return {"classes": ws.cfg.synth.n_classes, "subjects": len({r.subject for r in rows}),
            "utterances": len(rows),
            **{s: sum(r.split == s for r in rows) for s in ("train", "validation", "test")}}


def pretrain(ws: Workspace, modality: str, force: bool = False) -> Path:
    """RBM-pretrain one encoder; the checkpoint is a full single-stream model."""
    cfg = ws.cfg
    out = ws.ckpt(f"pretrain_{modality}")
    ws.claim(out, force)
    ws.prepare()
    train = ws.examples("train")
    frames = np.concatenate([e.inputs[modality] for e in train])
    normed, mean, std = znormalize(frames)
    rng = phase_rng(cfg.seed, f"pretrain-{modality}")
    history: list = []
    encoder = pretrain_stack(cfg.encoder_sizes, normed, cfg.cd, rng, history)
    stream = StreamParams.init(rng, frames.shape[1], cfg.encoder_sizes, cfg.stream_hidden, cfg.delta)
    stream.encoder = encoder
    stream.input_mean, stream.input_std = mean, std
    model = FusionModel.single(stream, _n_classes(ws), rng, modality)
    save_checkpoint(model, out, {"phase": f"pretrain-{modality}"})
    with open(ws.log_path(f"pretrain_{modality}"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["layer", "epoch", "reconstruction_error"])
        for k, errs in enumerate(history):
            for epoch, e in enumerate(errs, 1):
                w.writerow([k, epoch, f"{e:.6f}"])
    return out


def _n_classes(ws: Workspace) -> int:
    return max(r.label for r in ws.rows()) + 1


def _fresh_stream_model(ws: Workspace, modality: str, input_dim: int, rng) -> FusionModel:
    stream = StreamParams.init(rng, input_dim, ws.cfg.encoder_sizes, ws.cfg.stream_hidden,
                               ws.cfg.delta)
    return FusionModel.single(stream, _n_classes(ws), rng, modality)


def train_stream_phase(ws: Workspace, modality: str, force: bool = False) -> Path:
    cfg = ws.cfg
    out = ws.ckpt(f"stream_{modality}")
    ws.claim(out, force)
    rng = phase_rng(cfg.seed, f"stream-{modality}")
    pre = ws.ckpt(f"pretrain_{modality}")
    if cfg.skip_pretrain:
        model = None
    else:
        model = load_checkpoint(ws.require(pre, "pretrain"))
    ws.prepare()
    train, val = ws.examples("train"), ws.examples("validation")
    if model is None:
        frames = np.concatenate([e.inputs[modality] for e in train])
        model = _fresh_stream_model(ws, modality, frames.shape[1], rng)
        _, model.streams[0].input_mean, model.streams[0].input_std = znormalize(frames)
    _check_sizes(ws, model)
    model, history = train_stream(model, train, val, cfg.train, rng)
    save_checkpoint(model, out, {"phase": f"stream-{modality}"})
    write_log(ws.log_path(f"stream_{modality}"), history)
    return out


def _check_sizes(ws: Workspace, model: FusionModel) -> None:
    for s in model.streams:
        sizes = [l.out_dim for l in s.encoder]
        if sizes != ws.cfg.encoder_sizes or s.blstm.hidden_size != ws.cfg.stream_hidden:
            raise ConfigError(f"checkpoint encoder {sizes}/hidden {s.blstm.hidden_size} does not "
                              f"match config {ws.cfg.encoder_sizes}/{ws.cfg.stream_hidden}")


def train_fusion_phase(ws: Workspace, force: bool = False) -> Path:
    cfg = ws.cfg
    out = ws.ckpt("fusion")
    ws.claim(out, force)
    missing = [m for m in MODALITIES if not ws.ckpt(f"stream_{m}").exists()]
    if missing:
        raise DependencyError("fusion training needs trained stream checkpoints; missing "
                              + ", ".join(f"stream-{m}" for m in missing))
    streams = [load_stream(ws.ckpt(f"stream_{m}"), m) for m in MODALITIES]
    rng = phase_rng(cfg.seed, "fusion")
    model = FusionModel.fuse(streams, MODALITIES, _n_classes(ws), cfg.fusion_hidden, rng)
    _check_sizes(ws, model)
    ws.prepare()
    model, history = train_fusion(model, ws.examples("train"), ws.examples("validation"),
                                  cfg.train, rng)
    save_checkpoint(model, out, {"phase": "fusion"})
    write_log(ws.log_path("fusion"), history)
    return out


def noise_source(ws: Workspace, sample_rate: int) -> np.ndarray:
    cfg = ws.cfg
    if cfg.noise == "babble":
        n = int(cfg.noise_seconds * sample_rate)
        return babble_noise(phase_rng(cfg.seed, "eval"), n, sample_rate)
    noise, rate = read_wav(cfg.noise)
    if rate != sample_rate:
        raise DataError(f"noise file is {rate} Hz but the data is {sample_rate} Hz")
    return noise


def _checkpoint_for(stream: str) -> str:
    return "fusion" if stream == "fusion" else f"stream_{stream}"


def evaluate_phase(workspaces: list[Workspace], streams=None, snr_levels=None,
                   noise_runs: int = 1, out: Path | None = None) -> tuple[Path, str]:
    """Evaluate one or more trained workspaces (one per training run) on the test split.

    With several workspaces every row aggregates over them; with one workspace
    ``noise_runs`` independent noise draws are aggregated instead.
    """
    ws = workspaces[0]
    cfg = ws.cfg
    streams = streams or cfg.streams
    levels = [None] + list(cfg.snr_db if snr_levels is None else snr_levels)
    models = {}
    for s in streams:
        name = _checkpoint_for(s)
        models[STREAM_LABELS[s]] = [load_checkpoint(w.require(w.ckpt(name), s if s == "fusion"
                                                              else f"train-stream {s}"))
                                    for w in workspaces]
    rows = ws.rows("test")
    if not rows:
        raise DataError("the test split is empty")
    _, rate = read_wav(ws.data / rows[0].path / "audio.wav")
    noise = noise_source(ws, rate) if len(levels) > 1 else None
    runs = len(workspaces) if len(workspaces) > 1 else noise_runs
    table = snr_sweep(models, ws.data, rows, noise, levels, cfg.spectrogram,
                      seed=cfg.seed, runs=runs)
    out = out or ws.root / "reports" / "eval.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_report(out, table)
    return out, format_table(table)
