"""Dense float64 numerics and seeded randomness.

Matrices are plain ``numpy.ndarray`` objects of dtype float64. Random draws
come from numpy's Philox4x32 counter-based generator, whose output stream is
specified bit-for-bit and therefore identical across platforms for a seed.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError

DTYPE = np.float64


def make_rng(seed: int) -> np.random.Generator:
    """Return a Philox generator for a 64-bit unsigned seed."""
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.Philox(seed))


def as_matrix(a) -> np.ndarray:
    return np.asarray(a, dtype=DTYPE)


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def gaussian_sample(rng: np.random.Generator, rows: int, cols: int,
                    mean: float = 0.0, stddev: float = 1.0) -> np.ndarray:
    if stddev < 0:
        raise ValueError(f"stddev must be non-negative, got {stddev}")
    if stddev == 0:
        return np.full((rows, cols), float(mean), dtype=DTYPE)
    return rng.normal(mean, stddev, size=(rows, cols)).astype(DTYPE)


def glorot_bound(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def glorot_init(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    """Uniform Glorot weights shaped ``(fan_out, fan_in)`` (rows map outputs)."""
    if fan_in < 1 or fan_out < 1:
        raise ValueError(f"fan_in and fan_out must be >= 1, got {fan_in}, {fan_out}")
    bound = glorot_bound(fan_in, fan_out)
    return rng.uniform(-bound, bound, size=(fan_out, fan_in)).astype(DTYPE)


def check_finite(name: str, a: np.ndarray) -> None:
    if not np.all(np.isfinite(a)):
        raise FloatingPointError(f"non-finite values in {name}")
