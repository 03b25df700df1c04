"""Stream and fusion networks, frame-level prediction and checkpoints.

A stream is encoder (dense ReLU layers ending in a linear bottleneck), then
delta/delta-delta appended to the bottleneck, then a BLSTM. A ``FusionModel``
concatenates the stream outputs frame by frame, runs them through a fusion
BLSTM and a linear softmax output layer. The same class with a single stream
and no fusion BLSTM is the single-modality classifier.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ChecksumError, FormatError, ShapeError, SyncError
from .layers import (DeltaConfig, DenseLayer, LayerGradients, delta_backward, delta_forward,
                     dense_backward, dense_forward, softmax)
from .recurrent import BlstmParams, LstmParams, blstm_backward, blstm_forward
from .tensor import DTYPE


@dataclass
class StreamParams:
    encoder: list[DenseLayer]
    blstm: BlstmParams
    delta: DeltaConfig = field(default_factory=DeltaConfig)
    # z-normalisation statistics of the raw input; fixed, never trained
    input_mean: np.ndarray | None = None
    input_std: np.ndarray | None = None

    def __post_init__(self):
        for a, b in zip(self.encoder, self.encoder[1:]):
            if a.out_dim != b.in_dim:
                raise ShapeError(f"encoder layers {a.W.shape} and {b.W.shape} do not chain")
        if 3 * self.encoder[-1].out_dim != self.blstm.input_size:
            raise ShapeError(f"bottleneck width {self.encoder[-1].out_dim} x 3 != BLSTM input "
                             f"{self.blstm.input_size}")

    @property
    def input_dim(self) -> int:
        return self.encoder[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.blstm.output_size

    @classmethod
    def init(cls, rng, input_dim: int, encoder_sizes, hidden_size: int,
             delta: DeltaConfig | None = None) -> "StreamParams":
        sizes = [input_dim, *encoder_sizes]
        encoder = [DenseLayer.init(rng, i, o, "relu") for i, o in zip(sizes[:-2], sizes[1:-1])]
        encoder.append(DenseLayer.init(rng, sizes[-2], sizes[-1], "linear"))
        return cls(encoder, BlstmParams.init(rng, 3 * sizes[-1], hidden_size),
                   delta or DeltaConfig())

    def normalize(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=DTYPE)
        if self.input_mean is None:
            return x
        return (x - self.input_mean) / self.input_std


@dataclass
class FusionModel:
    streams: list[StreamParams]
    output: DenseLayer
    fusion: BlstmParams | None = None
    names: tuple[str, ...] = ("audio", "video")

    def __post_init__(self):
        self.names = tuple(self.names)
        if len(self.names) != len(self.streams):
            raise ShapeError(f"{len(self.streams)} streams but names {self.names}")
        width = sum(s.output_dim for s in self.streams)
        if self.fusion is None:
            if len(self.streams) != 1:
                raise ShapeError("multiple streams need a fusion BLSTM")
        elif self.fusion.input_size != width:
            raise ShapeError(f"fusion BLSTM input {self.fusion.input_size} != concatenated "
                             f"stream width {width}")
        else:
            width = self.fusion.output_size
        if self.output.in_dim != width or self.output.activation != "linear":
            raise ShapeError(f"output layer {self.output.W.shape} must be linear over {width} inputs")

    @property
    def n_classes(self) -> int:
        return self.output.out_dim

    @classmethod
    def single(cls, stream: StreamParams, n_classes: int, rng, name: str) -> "FusionModel":
        return cls([stream], DenseLayer.init(rng, stream.output_dim, n_classes, "linear"),
                   None, (name,))

    @classmethod
    def fuse(cls, streams, names, n_classes: int, hidden_size: int, rng) -> "FusionModel":
        width = sum(s.output_dim for s in streams)
        fusion = BlstmParams.init(rng, width, hidden_size)
        return cls(list(streams), DenseLayer.init(rng, fusion.output_size, n_classes, "linear"),
                   fusion, tuple(names))

    def parameters(self) -> dict[str, np.ndarray]:
        """Trainable arrays by name. The arrays are the live parameters."""
        out = {}
        for name, s in zip(self.names, self.streams):
            for k, layer in enumerate(s.encoder):
                out[f"{name}.encoder.{k}.W"] = layer.W
                out[f"{name}.encoder.{k}.b"] = layer.b
            out.update(_blstm_items(f"{name}.blstm", s.blstm))
        if self.fusion is not None:
            out.update(_blstm_items("fusion.blstm", self.fusion))
        out["output.W"] = self.output.W
        out["output.b"] = self.output.b
        return out

    def state(self) -> dict[str, np.ndarray]:
        """Everything a checkpoint stores: parameters plus normalisation statistics."""
        out = self.parameters()
        for name, s in zip(self.names, self.streams):
            if s.input_mean is not None:
                out[f"{name}.input_mean"] = s.input_mean
                out[f"{name}.input_std"] = s.input_std
        return out

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        """Copy values in place; keys and shapes must match ``parameters()``."""
        params = self.parameters()
        for key, value in params.items():
            if state[key].shape != value.shape:
                raise ShapeError(f"{key}: shape {state[key].shape} != {value.shape}")
            value[...] = state[key]

    def copy(self) -> "FusionModel":
        return _build(self.structure(), {k: v.copy() for k, v in self.state().items()})

    def structure(self) -> dict:
        return {
            "names": list(self.names),
            "streams": [{"activations": [l.activation for l in s.encoder],
                         "delta_window": s.delta.window,
                         "normalized": s.input_mean is not None} for s in self.streams],
            "fusion": self.fusion is not None,
        }


def is_lstm_param(name: str) -> bool:
    return ".blstm." in name


def _blstm_items(prefix: str, p: BlstmParams) -> dict[str, np.ndarray]:
    out = {}
    for d, lstm in (("fwd", p.forward), ("bwd", p.backward)):
        out[f"{prefix}.{d}.W"] = lstm.W
        out[f"{prefix}.{d}.U"] = lstm.U
        out[f"{prefix}.{d}.b"] = lstm.b
    return out


def _blstm_from(prefix: str, state) -> BlstmParams:
    return BlstmParams(*(LstmParams(state[f"{prefix}.{d}.W"], state[f"{prefix}.{d}.U"],
                                    state[f"{prefix}.{d}.b"]) for d in ("fwd", "bwd")))


def _stream_from(name: str, spec: dict, state) -> StreamParams:
    encoder = [DenseLayer(state[f"{name}.encoder.{k}.W"], state[f"{name}.encoder.{k}.b"], act)
               for k, act in enumerate(spec["activations"])]
    s = StreamParams(encoder, _blstm_from(f"{name}.blstm", state), DeltaConfig(spec["delta_window"]))
    if spec["normalized"]:
        s.input_mean = state[f"{name}.input_mean"]
        s.input_std = state[f"{name}.input_std"]
    return s


def _build(structure: dict, state) -> FusionModel:
    names = structure["names"]
    streams = [_stream_from(n, spec, state) for n, spec in zip(names, structure["streams"])]
    fusion = _blstm_from("fusion.blstm", state) if structure["fusion"] else None
    return FusionModel(streams, DenseLayer(state["output.W"], state["output.b"], "linear"),
                       fusion, tuple(names))


# -- forward / backward -----------------------------------------------------------

@dataclass
class FramePredictions:
    posteriors: np.ndarray  # (..., T, C)

    @property
    def labels(self) -> np.ndarray:
        return self.posteriors.argmax(axis=-1)


def _stream_forward(s: StreamParams, x):
    x = s.normalize(x)
    if x.shape[-1] != s.input_dim:
        raise ShapeError(f"input dim {x.shape[-1]} does not match encoder input {s.input_dim}")
    acts = [x]
    for layer in s.encoder:
        acts.append(dense_forward(layer, acts[-1]))
    out, bcache = blstm_forward(s.blstm, delta_forward(s.delta, acts[-1]))
    return out, (acts, bcache)


def _stream_backward(s: StreamParams, cache, dout) -> list:
    acts, bcache = cache
    gb, dz = blstm_backward(s.blstm, bcache, dout)
    d = delta_backward(s.delta, dz)
    grads: list[LayerGradients] = []
    for layer, x in zip(reversed(s.encoder), reversed(acts[:-1])):
        g = dense_backward(layer, x, d)
        grads.append(g)
        d = g.dinput
    return grads[::-1], gb


def stream_forward(s: StreamParams, x) -> np.ndarray:
    """Encoder, delta append and BLSTM over one feature sequence."""
    return _stream_forward(s, x)[0]


def forward(m: FusionModel, inputs):
    """Per-frame logits for a list of per-stream inputs. Returns ``(logits, cache)``."""
    if len(inputs) != len(m.streams):
        raise ShapeError(f"expected {len(m.streams)} input streams, got {len(inputs)}")
    frames = {np.shape(x)[:-1] for x in inputs}
    if len(frames) != 1:
        raise SyncError(f"stream inputs disagree on frame count: {sorted(frames)}")
    outs, caches = zip(*(_stream_forward(s, x) for s, x in zip(m.streams, inputs)))
    z = np.concatenate(outs, axis=-1)
    fcache = None
    if m.fusion is not None:
        fused, fcache = blstm_forward(m.fusion, z)
    else:
        fused = z
    logits = dense_forward(m.output, fused)
    return logits, (caches, z, fused, fcache)


def backward(m: FusionModel, cache, dlogits) -> dict[str, np.ndarray]:
    """Gradients of all ``parameters()`` given the gradient w.r.t. the logits."""
    caches, z, fused, fcache = cache
    grads = {}
    g = dense_backward(m.output, fused, dlogits)
    grads["output.W"], grads["output.b"] = g.dW, g.db
    if m.fusion is not None:
        gf, dz = blstm_backward(m.fusion, fcache, g.dinput)
        grads.update(_blstm_items("fusion.blstm", gf))
    else:
        dz = g.dinput
    offset = 0
    for name, s, c in zip(m.names, m.streams, caches):
        width = s.output_dim
        enc_grads, gb = _stream_backward(s, c, dz[..., offset:offset + width])
        offset += width
        for k, eg in enumerate(enc_grads):
            grads[f"{name}.encoder.{k}.W"] = eg.dW
            grads[f"{name}.encoder.{k}.b"] = eg.db
        grads.update(_blstm_items(f"{name}.blstm", gb))
    return grads


def fusion_forward(m: FusionModel, inputs) -> FramePredictions:
    logits, _ = forward(m, inputs)
    return FramePredictions(softmax(logits))


def majority_vote(pred: FramePredictions) -> int:
    """Most frequent frame label; ties go to the class with higher mean posterior."""
    post = np.asarray(pred.posteriors)
    if post.ndim != 2 or post.shape[0] < 1:
        raise ShapeError(f"expected (T, C) posteriors with T >= 1, got {post.shape}")
    counts = np.bincount(post.argmax(axis=1), minlength=post.shape[1])
    tied = np.flatnonzero(counts == counts.max())
    if len(tied) == 1:
        return int(tied[0])
    # fsum is exactly rounded, so the tie-break cannot depend on frame order
    sums = [math.fsum(post[:, c]) for c in tied]
    return int(tied[int(np.argmax(sums))])


# -- checkpoints ---------------------------------------------------------------------

MAGIC = b"AVFUSION"
FORMAT_VERSION = 1
_DIGEST = 32


def save_checkpoint(m: FusionModel, path, meta: dict | None = None) -> None:
    """Write magic, version, JSON manifest, little-endian float64 data, SHA-256."""
    state = m.state()
    header = {
        "structure": m.structure(),
        "entries": [[k, list(v.shape)] for k, v in state.items()],
        "meta": meta or {},
    }
    hbytes = json.dumps(header, sort_keys=True).encode()
    body = b"".join([MAGIC, struct.pack("<II", FORMAT_VERSION, len(hbytes)), hbytes]
                    + [np.ascontiguousarray(v, dtype="<f8").tobytes() for v in state.values()])
    Path(path).write_bytes(body + hashlib.sha256(body).digest())


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Return ``(header, state)`` after verifying magic, checksum and version."""
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise FormatError(f"{path}: not a checkpoint file")
    body, digest = raw[:-_DIGEST], raw[-_DIGEST:]
    if len(raw) < len(MAGIC) + 8 + _DIGEST or hashlib.sha256(body).digest() != digest:
        raise ChecksumError(f"{path}: checksum mismatch (corrupt or truncated file)")
    version, hlen = struct.unpack_from("<II", body, len(MAGIC))
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    start = len(MAGIC) + 8
    header = json.loads(body[start:start + hlen])
    offset = start + hlen
    state = {}
    for name, shape in header["entries"]:
        n = int(np.prod(shape, dtype=np.int64))
        state[name] = np.frombuffer(body, dtype="<f8", count=n, offset=offset) \
            .astype(DTYPE).reshape(shape)
        offset += 8 * n
    if offset != len(body):
        raise FormatError(f"{path}: manifest does not account for the data section")
    return header, state


def load_checkpoint(path) -> FusionModel:
    header, state = read_checkpoint(path)
    return _build(header["structure"], state)


def checkpoint_meta(path) -> dict:
    return read_checkpoint(path)[0]["meta"]


def load_stream(path, name: str | None = None) -> StreamParams:
    """Extract one stream from a checkpoint, e.g. to seed a fusion model slot."""
    m = load_checkpoint(path)
    name = name or m.names[0]
    if name not in m.names:
        raise FormatError(f"{path}: no stream named {name!r} (has {m.names})")
    return m.streams[m.names.index(name)]
