"""Synthetic audiovisual dataset standing in for real recordings at desk scale.

Every class maps to a latent pattern per modality. Video renders the pattern
as a bright blob sweeping across the frame along a pattern-specific direction;
audio renders it as a schedule of three harmonic tones. Subjects differ in
background, texture, blob size and voice pitch; utterances differ in timing,
jitter and pixel/sample noise.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .io import ManifestRow, write_manifest, write_pgm, write_wav

TONES_HZ = (600.0, 1000.0, 1400.0, 1800.0)
SPLIT_ORDER = ("train", "validation", "test")


@dataclass(frozen=True)
class SynthConfig:
    n_classes: int = 3
    n_subjects: int = 9
    utterances_per_class: int = 10  # per subject
    image_size: tuple[int, int] = (12, 12)
    sample_rate: int = 8000
    fps_video: float = 25.0
    video_frames: int = 15
    audio_signal: float = 1.0  # tone amplitude scale; 0 makes audio uninformative
    video_signal: float = 1.0  # blob contrast scale; 0 makes video uninformative
    pitch_spread: float = 0.03  # per-subject voice pitch factor in 1 +- spread
    split_subjects: tuple[int, int, int] = (5, 2, 2)  # train, validation, test
    # class -> latent pattern per modality; None means one pattern per class
    audio_patterns: tuple[int, ...] | None = None
    video_patterns: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.n_classes < 1:
            raise ValueError("need at least one class")
        if self.n_subjects < 1 or self.utterances_per_class < 1 or self.video_frames < 2:
            raise ValueError(f"infeasible dataset size in {self}")
        if sum(self.split_subjects) != self.n_subjects or min(self.split_subjects) < 0:
            raise ValueError(f"split_subjects {self.split_subjects} must partition "
                             f"{self.n_subjects} subjects")
        for name in ("audio_patterns", "video_patterns"):
            table = getattr(self, name)
            if table is not None and len(table) != self.n_classes:
                raise ValueError(f"{name} needs one entry per class")

    def pattern(self, modality: str, label: int) -> int:
        table = self.audio_patterns if modality == "audio" else self.video_patterns
        return label if table is None else table[label]

    @property
    def n_samples(self) -> int:
        return int(round(self.video_frames / self.fps_video * self.sample_rate))


def tone_schedule(pattern: int) -> list[float]:
    n = len(TONES_HZ)
    return [TONES_HZ[(pattern + k * (pattern + 1)) % n] for k in range(3)]


def _render_video(cfg: SynthConfig, pattern: int, subj: dict, rng) -> np.ndarray:
    H, W = cfg.image_size
    T = cfg.video_frames
    angle = np.pi * pattern / max(cfg.n_classes, 2) + rng.normal(0, 0.08)
    reach = 0.38 * min(H, W)
    centre = np.array([(H - 1) / 2, (W - 1) / 2]) + rng.normal(0, 0.4, 2)
    direction = np.array([np.sin(angle), np.cos(angle)])
    start, stop = rng.uniform(-0.15, 0.05), rng.uniform(0.95, 1.15)
    s = np.linspace(start, stop, T)
    track = centre + np.outer(2 * s - 1, direction) * reach
    yy, xx = np.mgrid[0:H, 0:W]
    blob = np.exp(-((yy[None] - track[:, 0, None, None]) ** 2
                    + (xx[None] - track[:, 1, None, None]) ** 2) / (2 * subj["blob_sigma"] ** 2))
    img = (subj["background"] + subj["texture"][None]
           + cfg.video_signal * subj["contrast"] * blob
           + rng.normal(0, 6.0, size=(T, H, W)))
    return np.clip(np.round(img), 0, 255).astype(np.uint8)


def _render_audio(cfg: SynthConfig, pattern: int, subj: dict, rng) -> np.ndarray:
    n = cfg.n_samples
    t = np.arange(n) / cfg.sample_rate
    edges = np.array([0.0, 1 / 3, 2 / 3, 1.0]) + np.r_[0.0, rng.normal(0, 0.03, 2), 0.0]
    pos = np.arange(n) / n
    freq = np.zeros(n)
    for k, f in enumerate(tone_schedule(pattern)):
        freq[(pos >= edges[k]) & (pos < edges[k + 1])] = f * subj["pitch"]
    phase = 2 * np.pi * np.cumsum(freq) / cfg.sample_rate
    envelope = np.minimum(1.0, np.minimum(t, t[-1] - t) / 0.02)
    amp = 0.2 * cfg.audio_signal * rng.uniform(0.8, 1.2)
    voice = amp * envelope * (np.sin(phase) + 0.5 * np.sin(2 * phase + subj["timbre"]))
    return voice + rng.normal(0, 0.01, n)


def synth_dataset(cfg: SynthConfig, out_dir, rng) -> list[ManifestRow]:
    """Write utterance directories plus ``manifest.csv`` under ``out_dir``."""
    out = Path(out_dir)
    H, W = cfg.image_size
    rows = []
    split_of = [s for s, k in zip(SPLIT_ORDER, cfg.split_subjects) for _ in range(k)]
    for si in range(cfg.n_subjects):
        subj = {
            "background": rng.uniform(70, 130),
            "texture": rng.normal(0, 10, size=(H, W)),
            "blob_sigma": rng.uniform(1.2, 1.8),
            "contrast": rng.uniform(70, 100),
            "pitch": rng.uniform(1 - cfg.pitch_spread, 1 + cfg.pitch_spread),
            "timbre": rng.uniform(0, 2 * np.pi),
        }
        subject = f"s{si:02d}"
        for k in range(cfg.utterances_per_class * cfg.n_classes):
            label = k % cfg.n_classes
            rel = f"utterances/{subject}_u{k:03d}"
            d = out / rel
            (d / "video").mkdir(parents=True, exist_ok=True)
            for t, frame in enumerate(_render_video(cfg, cfg.pattern("video", label), subj, rng)):
                write_pgm(d / "video" / f"{t:04d}.pgm", frame)
            write_wav(d / "audio.wav", _render_audio(cfg, cfg.pattern("audio", label), subj, rng),
                      cfg.sample_rate)
            (d / "meta.json").write_text(json.dumps({"fps_video": cfg.fps_video}) + "\n")
            rows.append(ManifestRow(rel, label, subject, split_of[si]))
    write_manifest(out / "manifest.csv", rows)
    (out / "synth_config.json").write_text(json.dumps(asdict(cfg), sort_keys=True, indent=1) + "\n")
    return rows
