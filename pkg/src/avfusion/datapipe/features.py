"""Utterance loading and synchronised per-modality feature extraction."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import DataError
from .audio import SpectrogramConfig, mix_at_snr, spectrogram
from .io import ManifestRow, read_pgm, read_wav
from .video import FeatureSequence, mean_image_subtract, synchronize

MODALITIES = ("audio", "video")


@dataclass
class Utterance:
    frames: np.ndarray  # (T, H, W) uint8
    fps_video: float
    waveform: np.ndarray  # float64 in [-1, 1)
    sample_rate: int
    label: int
    subject: str


@dataclass
class Example:
    """Synchronised network inputs for one utterance, keyed by modality."""

    inputs: dict[str, np.ndarray]
    label: int
    subject: str
    path: str = ""

    @property
    def n_frames(self) -> int:
        return len(next(iter(self.inputs.values())))


def load_utterance(directory, label: int = -1, subject: str = "") -> Utterance:
    """Read ``audio.wav``, ``video/*.pgm`` and ``meta.json`` (``fps_video``) from a directory."""
    d = Path(directory)
    try:
        meta = json.loads((d / "meta.json").read_text())
        fps = float(meta["fps_video"])
    except (OSError, KeyError, ValueError) as e:
        raise DataError(f"{d}: missing or invalid meta.json ({e})") from e
    frame_files = sorted((d / "video").glob("*.pgm"))
    if not frame_files:
        raise DataError(f"{d}: no PGM frames under video/")
    frames = [read_pgm(p) for p in frame_files]
    if len({f.shape for f in frames}) != 1:
        raise DataError(f"{d}: frame sizes differ within the utterance")
    waveform, rate = read_wav(d / "audio.wav")
    return Utterance(np.stack(frames), fps, waveform, rate, label, subject)


def extract_features(utt: Utterance, cfg: SpectrogramConfig = SpectrogramConfig(),
                     noise=None, snr: float | None = None, noise_offset: int = 0
                     ) -> dict[str, np.ndarray]:
    """Spectrogram and flattened mean-removed images, both at the spectrogram frame rate.

    With ``noise`` and ``snr`` the waveform is first mixed at that SNR; video is
    never touched by acoustic noise.
    """
    wav = utt.waveform
    if noise is not None and snr is not None:
        wav = mix_at_snr(wav, noise, snr, noise_offset)
    audio = FeatureSequence(spectrogram(wav, utt.sample_rate, cfg), cfg.frame_rate)
    centred = mean_image_subtract(utt.frames)
    video = FeatureSequence(centred.reshape(len(centred), -1), utt.fps_video)
    a, v = synchronize(audio, video)
    return {"audio": a, "video": v}


def load_examples(root, rows: list[ManifestRow], cfg: SpectrogramConfig = SpectrogramConfig(),
                  noise=None, snr: float | None = None, rng=None) -> list[Example]:
    """Load and featurise manifest rows relative to ``root``.

    Noisy loading draws one random noise offset per utterance from ``rng``.
    """
    out = []
    for row in rows:
        utt = load_utterance(Path(root) / row.path, row.label, row.subject)
        offset = 0
        if noise is not None and snr is not None and rng is not None:
            offset = int(rng.integers(0, len(noise)))
        feats = extract_features(utt, cfg, noise, snr, offset)
        out.append(Example(feats, row.label, row.subject, row.path))
    return out
