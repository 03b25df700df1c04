"""Spectrograms, SNR-exact noise mixing and a babble-like noise source."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError


@dataclass(frozen=True)
class SpectrogramConfig:
    window_ms: float = 40.0
    hop_ms: float = 10.0
    fft_size: int | None = None  # default: next power of two >= window

    def __post_init__(self):
        if not 0 < self.hop_ms <= self.window_ms:
            raise ValueError(f"need 0 < hop <= window, got {self.hop_ms}, {self.window_ms}")

    @property
    def frame_rate(self) -> float:
        return 1000.0 / self.hop_ms

    def window_samples(self, sample_rate: int) -> int:
        return int(round(sample_rate * self.window_ms / 1000.0))

    def hop_samples(self, sample_rate: int) -> int:
        return int(round(sample_rate * self.hop_ms / 1000.0))

    def fft_samples(self, sample_rate: int) -> int:
        if self.fft_size:
            return self.fft_size
        return 1 << (self.window_samples(sample_rate) - 1).bit_length()

    def n_bins(self, sample_rate: int) -> int:
        return self.fft_samples(sample_rate) // 2 + 1


def hann(n: int) -> np.ndarray:
    """Periodic Hann window."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def n_frames(n_samples: int, window: int, hop: int) -> int:
    return (n_samples - window) // hop + 1


def spectrogram(waveform, sample_rate: int, cfg: SpectrogramConfig = SpectrogramConfig()):
    """Log-magnitude STFT ``log(1 + |DFT|)``, one row per hop. Returns ``(T, bins)``."""
    x = np.asarray(waveform, dtype=np.float64)
    if sample_rate < 8000:
        raise DataError(f"sample rate {sample_rate} Hz is below 8 kHz")
    win, hop = cfg.window_samples(sample_rate), cfg.hop_samples(sample_rate)
    if x.ndim != 1 or len(x) < win:
        raise DataError(f"waveform of {len(x)} samples is shorter than one {win}-sample window")
    T = n_frames(len(x), win, hop)
    idx = np.arange(T)[:, None] * hop + np.arange(win)
    mag = np.abs(np.fft.rfft(x[idx] * hann(win), n=cfg.fft_samples(sample_rate), axis=1))
    return np.log1p(mag)


def power(x) -> float:
    return float(np.mean(np.square(x)))


def snr_db(signal, noise) -> float:
    return 10.0 * np.log10(power(signal) / power(noise))


def mix_at_snr(clean, noise, snr: float, offset: int = 0) -> np.ndarray:
    """Add ``noise`` scaled so the result has exactly ``snr`` dB SNR.

    Noise is read from ``offset`` and looped when it is shorter than ``clean``.
    Both powers are mean squares over the mixed region.
    """
    clean = np.asarray(clean, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if len(noise) == 0:
        raise ValueError("noise is empty")
    segment = np.take(noise, np.arange(offset, offset + len(clean)), mode="wrap")
    p_clean, p_noise = power(clean), power(segment)
    if p_clean == 0 or p_noise == 0:
        raise ValueError("clean signal and noise must both have nonzero power")
    alpha = np.sqrt(p_clean / (p_noise * 10.0 ** (snr / 10.0)))
    return clean + alpha * segment


def babble_noise(rng, n_samples: int, sample_rate: int, talkers: int = 8) -> np.ndarray:
    """Sum of ``talkers`` speech-band noise sources with formant peaks and syllabic
    amplitude modulation; unit RMS."""
    freqs = np.fft.rfftfreq(n_samples, 1.0 / sample_rate)
    t = np.arange(n_samples) / sample_rate
    top = min(3400.0, 0.45 * sample_rate)
    band = (freqs >= 300.0) & (freqs <= top)
    out = np.zeros(n_samples)
    for _ in range(talkers):
        shape = band * (0.3 + sum(np.exp(-0.5 * ((freqs - f) / bw) ** 2)
                                  for f, bw in zip(rng.uniform(300, top, 3), rng.uniform(80, 250, 3))))
        spec = np.fft.rfft(rng.standard_normal(n_samples)) * shape
        voice = np.fft.irfft(spec, n=n_samples)
        rate, phase = rng.uniform(2.0, 6.0), rng.uniform(0, 2 * np.pi)
        out += voice * (0.5 + 0.5 * np.sin(2 * np.pi * rate * t + phase)) ** 2
    return out / np.sqrt(power(out))
