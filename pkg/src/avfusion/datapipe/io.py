"""On-disk formats: 16-bit mono WAV, binary PGM (P5), manifest CSV, feature cache."""

from __future__ import annotations

import csv
import struct
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import DataError

SPLITS = ("train", "validation", "test")
MANIFEST_FIELDS = ("path", "label", "subject", "split")


def read_wav(path) -> tuple[np.ndarray, int]:
    """Return ``(samples as float64 in [-1, 1), sample_rate)`` for 16-bit PCM mono."""
    try:
        with wave.open(str(path), "rb") as w:
            if w.getsampwidth() != 2 or w.getnchannels() != 1:
                raise DataError(f"{path}: need 16-bit mono PCM, got {w.getsampwidth() * 8}-bit "
                                f"x{w.getnchannels()}")
            rate = w.getframerate()
            raw = w.readframes(w.getnframes())
    except (wave.Error, EOFError) as e:
        raise DataError(f"{path}: unreadable WAV ({e})") from e
    return np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0, rate


def to_pcm16(x) -> np.ndarray:
    return np.clip(np.round(np.asarray(x) * 32768.0), -32768, 32767).astype("<i2")


def write_wav(path, samples, sample_rate: int) -> None:
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(int(sample_rate))
        w.writeframes(to_pcm16(samples).tobytes())


def _pgm_tokens(data: bytes, count: int) -> tuple[list[int], int]:
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    return tokens, pos + 1  # exactly one whitespace byte precedes the raster


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    try:
        (magic, w, h, maxval), pos = _pgm_tokens(data, 4)
        w, h, maxval = int(w), int(h), int(maxval)
    except (ValueError, IndexError) as e:
        raise DataError(f"{path}: malformed PGM header") from e
    if magic != b"P5" or not 0 < maxval < 256:
        raise DataError(f"{path}: only 8-bit binary PGM (P5) is supported")
    raster = data[pos:pos + w * h]
    if len(raster) != w * h:
        raise DataError(f"{path}: truncated PGM raster")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w).copy()


def write_pgm(path, image) -> None:
    img = np.asarray(image)
    if img.ndim != 2 or img.dtype != np.uint8:
        raise DataError("PGM images must be 2-D uint8 arrays")
    h, w = img.shape
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + img.tobytes())


@dataclass(frozen=True)
class ManifestRow:
    path: str
    label: int
    subject: str
    split: str


def read_manifest(path) -> list[ManifestRow]:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != MANIFEST_FIELDS:
            raise DataError(f"{path}: manifest header must be {','.join(MANIFEST_FIELDS)}")
        rows = []
        for r in reader:
            if r["split"] not in SPLITS:
                raise DataError(f"{path}: unknown split {r['split']!r}")
            rows.append(ManifestRow(r["path"], int(r["label"]), r["subject"], r["split"]))
    check_subject_disjoint(rows)
    return rows


def write_manifest(path, rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(MANIFEST_FIELDS)
        for r in rows:
            w.writerow([r.path, r.label, r.subject, r.split])


def check_subject_disjoint(rows) -> None:
    seen: dict[str, str] = {}
    for r in rows:
        if seen.setdefault(r.subject, r.split) != r.split:
            raise DataError(f"subject {r.subject} appears in both {seen[r.subject]} and {r.split}")


_FEAT_MAGIC = b"AVFFEAT1"


def write_features(path, x) -> None:
    """Flat cache: magic, ndim, shape as uint64, then little-endian float64 data."""
    x = np.ascontiguousarray(x, dtype="<f8")
    header = _FEAT_MAGIC + struct.pack(f"<Q{x.ndim}Q", x.ndim, *x.shape)
    Path(path).write_bytes(header + x.tobytes())


def read_features(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if not raw.startswith(_FEAT_MAGIC):
        raise DataError(f"{path}: not a feature cache file")
    (ndim,) = struct.unpack_from("<Q", raw, 8)
    shape = struct.unpack_from(f"<{ndim}Q", raw, 16)
    offset = 16 + 8 * ndim
    if len(raw) - offset != 8 * int(np.prod(shape, dtype=np.int64)):
        raise DataError(f"{path}: feature cache size does not match its header")
    return np.frombuffer(raw, dtype="<f8", offset=offset).reshape(shape).astype(np.float64)
