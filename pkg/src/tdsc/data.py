"""Frame sequences: file I/O, synthetic union-of-subspaces data, noise, concatenation.

Internally features are D x N (one column per frame). CSV files are written
one frame per row, so loaders transpose.

Binary layout (little-endian)::

    4s   magic "TDSC"
    u32  version (1)
    u32  D
    u32  N
    u32  has_labels (0 or 1)
    f64  D*N feature values, column-major (frame after frame)
    i32  N labels, present iff has_labels
"""

import csv
import logging
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError, DimensionMismatch, EmptyFile, InvalidConfig, ParseError, RaggedRows

log = logging.getLogger(__name__)

MAGIC = b"TDSC"
VERSION = 1
_HEADER = "<4sIIII"


@dataclass
class FrameSequence:
    features: np.ndarray
    labels: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise DimensionMismatch("features must be a D x N matrix")
        if not np.isfinite(self.features).all():
            raise DataError(f"sequence {self.name!r} has non-finite features")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.n,):
                raise DimensionMismatch(f"expected {self.n} labels, got {self.labels.shape}")

    @property
    def dim(self):
        return self.features.shape[0]

    @property
    def n(self):
        return self.features.shape[1]


@dataclass(frozen=True)
class SynthConfig:
    ambient_dim: int = 30
    subspace_dim: int = 3
    k: int = 3
    segment_lengths: tuple = (40, 40, 40)
    noise_sigma: float = 0.01
    seed: int = 0
    # label of each segment; defaults to segment index mod k
    segment_labels: tuple | None = field(default=None)

    def labels_for_segments(self):
        if self.segment_labels is not None:
            return tuple(self.segment_labels)
        return tuple(i % self.k for i in range(len(self.segment_lengths)))


def _validate_synth(cfg):
    if cfg.ambient_dim < 1 or cfg.subspace_dim < 1 or cfg.k < 1:
        raise InvalidConfig("ambient_dim, subspace_dim and k must be >= 1")
    if cfg.subspace_dim > cfg.ambient_dim:
        raise InvalidConfig("subspace_dim cannot exceed ambient_dim")
    if not cfg.segment_lengths or any(n < 2 for n in cfg.segment_lengths):
        raise InvalidConfig("need at least one segment, each with >= 2 frames")
    if cfg.noise_sigma < 0:
        raise InvalidConfig("noise_sigma must be >= 0")
    seg_labels = cfg.labels_for_segments()
    if len(seg_labels) != len(cfg.segment_lengths) or any(not 0 <= j < cfg.k for j in seg_labels):
        raise InvalidConfig("segment_labels must give one label in [0, k) per segment")


def subspace_bases(cfg, rng):
    D, r, k = cfg.ambient_dim, cfg.subspace_dim, cfg.k
    if r * k <= D:
        q, _ = np.linalg.qr(rng.standard_normal((D, r * k)))
        return [q[:, j * r:(j + 1) * r] for j in range(k)]
    log.warning("r*k = %d exceeds D = %d; subspaces will not be mutually orthogonal", r * k, D)
    return [np.linalg.qr(rng.standard_normal((D, r)))[0] for _ in range(k)]


def synth_uos_sequence(cfg):
    """Segments drawn from k random r-dimensional subspaces, unit-norm frames."""
    _validate_synth(cfg)
    rng = np.random.default_rng(cfg.seed)
    bases = subspace_bases(cfg, rng)
    blocks, labels = [], []
    for length, j in zip(cfg.segment_lengths, cfg.labels_for_segments()):
        coef = rng.standard_normal((cfg.subspace_dim, length))
        noise = rng.standard_normal((cfg.ambient_dim, length))
        blocks.append(bases[j] @ coef + cfg.noise_sigma * noise)
        labels.extend([j] * length)
    x = np.concatenate(blocks, axis=1)
    x /= np.linalg.norm(x, axis=0, keepdims=True)
    return FrameSequence(x, np.array(labels), name=f"synth-seed{cfg.seed}")


def add_noise(seq, sigma, seed):
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    rng = np.random.default_rng(seed)
    noisy = seq.features + sigma * rng.standard_normal(seq.features.shape)
    return replace(seq, features=noisy, name=f"{seq.name}+noise{sigma:g}")


def concat_sequences(seqs, offset_labels=True):
    """Join sequences along time; with ``offset_labels`` each input gets fresh ids."""
    seqs = list(seqs)
    if not seqs:
        raise ValueError("nothing to concatenate")
    dims = {s.dim for s in seqs}
    if len(dims) != 1:
        raise DimensionMismatch(f"sequences have different feature dims: {sorted(dims)}")
    feats = np.concatenate([s.features for s in seqs], axis=1)
    labels = None
    if all(s.labels is not None for s in seqs):
        parts, offset = [], 0
        for s in seqs:
            parts.append(s.labels + offset)
            if offset_labels:
                offset += int(s.labels.max()) + 1
        labels = np.concatenate(parts)
    return FrameSequence(feats, labels, name="+".join(s.name for s in seqs))


def save_features(path, seq, fmt="binary"):
    if fmt == "binary":
        with open(path, "wb") as fh:
            has = seq.labels is not None
            fh.write(struct.pack(_HEADER, MAGIC, VERSION, seq.dim, seq.n, int(has)))
            fh.write(np.asarray(seq.features, dtype="<f8").tobytes(order="F"))
            if has:
                fh.write(seq.labels.astype("<i4").tobytes())
    elif fmt == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            for i in range(seq.n):
                row = [format(v, ".17g") for v in seq.features[:, i]]
                if seq.labels is not None:
                    row.append(str(int(seq.labels[i])))
                writer.writerow(row)
    else:
        raise ValueError(f"unknown feature format {fmt!r}")


def _load_csv(path, labels):
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise RaggedRows(f"expected {width} columns, found {len(row)}", lineno)
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from exc
    if not rows:
        raise EmptyFile(f"{path}: no frames")
    table = np.array(rows)
    lab = None
    if labels:
        if width < 2:
            raise ParseError("label column requested but rows have a single column", 1)
        lab_col = table[:, -1]
        if not np.all(lab_col == np.round(lab_col)):
            raise ParseError("label column is not integer-valued")
        lab = lab_col.astype(np.int64)
        table = table[:, :-1]
    return table.T.copy(), lab


def _load_binary(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw:
        raise EmptyFile(f"{path}: empty file")
    size = struct.calcsize(_HEADER)
    if len(raw) < size:
        raise ParseError(f"{path}: truncated header")
    magic, version, D, N, has = struct.unpack_from(_HEADER, raw)
    if magic != MAGIC:
        raise ParseError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise ParseError(f"{path}: unsupported version {version}")
    expected = size + 8 * D * N + (4 * N if has else 0)
    if len(raw) != expected:
        raise ParseError(f"{path}: expected {expected} bytes, found {len(raw)}")
    feats = np.frombuffer(raw, dtype="<f8", count=D * N, offset=size).reshape((D, N), order="F")
    lab = None
    if has:
        lab = np.frombuffer(raw, dtype="<i4", count=N, offset=size + 8 * D * N).astype(np.int64)
    return feats.astype(np.float64), lab


def load_features(path, fmt=None, labels=False):
    """Read a sequence from ``csv`` or ``binary``; format inferred from suffix if omitted."""
    path = str(path)
    if fmt is None:
        fmt = "csv" if path.lower().endswith((".csv", ".txt")) else "binary"
    if fmt == "csv":
        feats, lab = _load_csv(path, labels)
    elif fmt == "binary":
        feats, lab = _load_binary(path)
    else:
        raise ValueError(f"unknown feature format {fmt!r}")
    return FrameSequence(feats, lab, name=path)


def save_labels(path, labels):
    with open(path, "w") as fh:
        fh.writelines(f"{int(v)}\n" for v in labels)


def load_labels(path):
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(int(line))
            except ValueError as exc:
                raise ParseError(f"not an integer label: {line!r}", lineno) from exc
    if not out:
        raise EmptyFile(f"{path}: no labels")
    return np.array(out, dtype=np.int64)
