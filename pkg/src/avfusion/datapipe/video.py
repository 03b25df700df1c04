"""Visual preprocessing and audio/video frame-rate synchronisation."""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from ..errors import SyncError


class FeatureSequence(NamedTuple):
    data: np.ndarray  # (T, D)
    fps: float


def mean_image_subtract(frames) -> np.ndarray:
    """Remove the utterance's mean image from every frame; returns float64 ``(T, H, W)``."""
    x = np.asarray(frames, dtype=np.float64)
    if x.ndim != 3 or len(x) < 1:
        raise ValueError(f"expected (T, H, W) frames with T >= 1, got {x.shape}")
    return x - x.mean(axis=0)


def upsample_linear(x, rate_in: float, rate_out: float) -> np.ndarray:
    """Linearly interpolate ``(T, D)`` frames at times ``k / rate_out``.

    Output frames cover ``k = 0 .. floor((T - 1) * rate_out / rate_in)``. A single
    input frame is held for the duration of one source frame.
    """
    x = np.asarray(x, dtype=np.float64)
    if not 0 < rate_in <= rate_out:
        raise ValueError(f"need 0 < rate_in <= rate_out, got {rate_in}, {rate_out}")
    T = len(x)
    if T == 1:
        return np.repeat(x, max(1, int(rate_out // rate_in)), axis=0)
    if rate_in == rate_out:
        return x.copy()
    ratio = rate_in / rate_out
    K = math.floor((T - 1) / ratio + 1e-9)
    pos = np.arange(K + 1) * ratio
    i0 = np.minimum(np.floor(pos + 1e-9).astype(int), T - 1)
    frac = np.clip(pos - i0, 0.0, None)
    frac[frac < 1e-9] = 0.0  # positions that land on a source frame reproduce it exactly
    i1 = np.minimum(i0 + 1, T - 1)
    return x[i0] * (1.0 - frac)[:, None] + x[i1] * frac[:, None]


def synchronize(audio: FeatureSequence, video: FeatureSequence) -> tuple[np.ndarray, np.ndarray]:
    """Upsample video to the audio frame rate and truncate both to the shorter one."""
    v = upsample_linear(video.data, video.fps, audio.fps)
    tolerance = math.ceil(audio.fps / video.fps) + 1
    if abs(len(v) - len(audio.data)) > tolerance:
        raise SyncError(f"audio has {len(audio.data)} frames but video gives {len(v)} at "
                        f"{audio.fps:g} fps; durations disagree")
    n = min(len(v), len(audio.data))
    return audio.data[:n], v[:n]
