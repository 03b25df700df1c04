"""Run configuration: presets, YAML loading, overrides and validation."""

from __future__ import annotations

import copy
from dataclasses import dataclass, fields
from pathlib import Path

import yaml

from .datapipe import SpectrogramConfig, SynthConfig
from .errors import ConfigError
from .layers import DeltaConfig
from .rbm import CdConfig
from .training import TrainConfig

SECTIONS = ("synth", "spectrogram", "model", "rbm", "train", "eval")
STREAM_CHOICES = ("audio", "video", "fusion")

_COMMON = {
    "spectrogram": {"window_ms": 40.0, "hop_ms": 10.0, "fft_size": None},
    "rbm": {"epochs": 20, "batch_size": 100, "l2": 0.0002, "learning_rate": 0.001, "skip": False},
    "train": {"batch_utterances": 10, "lr_stream": 0.0003, "lr_fusion": 0.0001,
              "early_stop_delay": 5, "clip_threshold": 5.0},
    "eval": {"snr_db": [20, 15, 10, 5, 0], "streams": ["audio", "video", "fusion"],
             "noise": "babble", "noise_seconds": 30.0},
}

PRESETS = {
    "desk": {
        "synth": {"n_classes": 3, "n_subjects": 9, "utterances_per_class": 10,
                  "image_size": [12, 12], "sample_rate": 8000, "fps_video": 25.0,
                  "video_frames": 15, "audio_signal": 1.0, "video_signal": 1.0, "pitch_spread": 0.03,
                  "split_subjects": [5, 2, 2]},
        "model": {"encoder": [64, 32, 16], "bottleneck": 8, "stream_hidden": 16,
                  "fusion_hidden": 16, "delta_window": 2},
        "train": {"max_epochs": 60},
    },
    "full": {
        "synth": {"n_classes": 4, "n_subjects": 21, "utterances_per_class": 10,
                  "image_size": [30, 45], "sample_rate": 48000, "fps_video": 25.0,
                  "video_frames": 25, "audio_signal": 1.0, "video_signal": 1.0, "pitch_spread": 0.03,
                  "split_subjects": [7, 7, 7]},
        "model": {"encoder": [2000, 1000, 500], "bottleneck": 50, "stream_hidden": 150,
                  "fusion_hidden": 150, "delta_window": 2},
        "train": {"max_epochs": 500},
    },
}


def _merge(base: dict, extra: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if k not in out:
            raise ConfigError(f"unknown config key {where}{k}")
        if isinstance(out[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"config key {where}{k} must be a section")
            out[k] = _merge(out[k], v, f"{where}{k}.")
        else:
            out[k] = v
    return out


def preset(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r} (choose from {', '.join(PRESETS)})")
    doc = {"preset": name, "seed": 0, "runs": 10, "data": None}
    doc.update(copy.deepcopy(_COMMON))
    for section, values in PRESETS[name].items():
        doc[section] = {**doc.get(section, {}), **values}
    return doc


@dataclass
class RunConfig:
    preset: str
    seed: int
    runs: int
    data: str | None  # dataset directory holding manifest.csv; None = <out>/data
    synth: SynthConfig
    spectrogram: SpectrogramConfig
    cd: CdConfig
    skip_pretrain: bool
    train: TrainConfig
    encoder: list[int]
    bottleneck: int
    stream_hidden: int
    fusion_hidden: int
    delta: DeltaConfig
    snr_db: list[float]
    streams: list[str]
    noise: str
    noise_seconds: float
    document: dict

    @property
    def encoder_sizes(self) -> list[int]:
        return [*self.encoder, self.bottleneck]

    def dump(self) -> str:
        return yaml.safe_dump(self.document, sort_keys=True)


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Preset defaults, then the YAML file, then ``overrides`` (dotted keys allowed)."""
    doc_in = {}
    if path is not None:
        try:
            doc_in = yaml.safe_load(Path(path).read_text()) or {}
        except (OSError, yaml.YAMLError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        if not isinstance(doc_in, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    flat = dict(overrides or {})
    name = flat.pop("preset", None) or doc_in.get("preset", "desk")
    doc = _merge(preset(name), {k: v for k, v in doc_in.items() if k != "preset"})
    for key, value in flat.items():
        if value is None:
            continue
        *parents, leaf = key.split(".")
        nested: dict = {leaf: value}
        for p in reversed(parents):
            nested = {p: nested}
        doc = _merge(doc, nested)
    return validate(doc)


def _build(cls, values: dict, section: str):
    allowed = {f.name for f in fields(cls)}
    try:
        return cls(**{k: (tuple(v) if isinstance(v, list) else v)
                      for k, v in values.items() if k in allowed})
    except (TypeError, ValueError) as e:
        raise ConfigError(f"[{section}] {e}") from e


def validate(doc: dict) -> RunConfig:
    """Check every dimension and range before any work starts."""
    m = doc["model"]
    sizes = [*m["encoder"], m["bottleneck"]]
    if not all(isinstance(s, int) and s >= 1 for s in sizes):
        raise ConfigError(f"encoder sizes must be positive integers, got {sizes}")
    for key in ("stream_hidden", "fusion_hidden"):
        if not isinstance(m[key], int) or m[key] < 1:
            raise ConfigError(f"model.{key} must be a positive integer")
    if not isinstance(doc["seed"], int) or not 0 <= doc["seed"] < 2**64:
        raise ConfigError("seed must be a 64-bit unsigned integer")
    if not isinstance(doc["runs"], int) or doc["runs"] < 1:
        raise ConfigError("runs must be >= 1")
    ev = doc["eval"]
    bad = set(ev["streams"]) - set(STREAM_CHOICES)
    if bad or not ev["streams"]:
        raise ConfigError(f"eval.streams must be drawn from {STREAM_CHOICES}, got {ev['streams']}")
    try:
        snrs = [float(s) for s in ev["snr_db"]]
    except (TypeError, ValueError) as e:
        raise ConfigError(f"eval.snr_db must be numbers: {e}") from e
    synth = _build(SynthConfig, doc["synth"], "synth")
    spec = _build(SpectrogramConfig, doc["spectrogram"], "spectrogram")
    if spec.window_samples(synth.sample_rate) < 2 or spec.hop_samples(synth.sample_rate) < 1:
        raise ConfigError("spectrogram window/hop round to nothing at the configured sample rate")
    if spec.fft_size is not None and spec.fft_size < spec.window_samples(synth.sample_rate):
        raise ConfigError("spectrogram.fft_size is shorter than the window")
    rbm = dict(doc["rbm"])
    skip = bool(rbm.pop("skip"))
    return RunConfig(
        preset=doc["preset"], seed=doc["seed"], runs=doc["runs"], data=doc["data"],
        synth=synth, spectrogram=spec, cd=_build(CdConfig, rbm, "rbm"), skip_pretrain=skip,
        train=_build(TrainConfig, doc["train"], "train"),
        encoder=list(m["encoder"]), bottleneck=m["bottleneck"], stream_hidden=m["stream_hidden"],
        fusion_hidden=m["fusion_hidden"], delta=_build(DeltaConfig, {"window": m["delta_window"]},
                                                       "model"),
        snr_db=snrs, streams=list(ev["streams"]), noise=str(ev["noise"]),
        noise_seconds=float(ev["noise_seconds"]), document=doc)


def default_document(name: str = "desk") -> str:
    return yaml.safe_dump(preset(name), sort_keys=True)

