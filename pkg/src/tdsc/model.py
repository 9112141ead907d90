"""Reparameterization network: MLP encoder with a feature head and a cluster head.

    f(x) = W2 relu(W1 x + b1) + b2
    z = Wg f(x) + bg,   y = Wh f(x) + bh

Both head outputs are normalized column-wise to the unit sphere. Gradients
are written out by hand; there is no general autodiff here.
"""

import dataclasses
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataError, ShapeMismatch, ZeroNormColumn

CHECKPOINT_MAGIC = b"TDSP"
CHECKPOINT_VERSION = 1
_MIN_NORM = 1e-12


@dataclass(frozen=True)
class NetworkDims:
    input_dim: int
    hidden_dim: int = 512
    output_dim: int = 64

    def __post_init__(self):
        for name in ("input_dim", "hidden_dim", "output_dim"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass
class NetworkParams:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    wg: np.ndarray
    bg: np.ndarray
    wh: np.ndarray
    bh: np.ndarray

    @classmethod
    def names(cls):
        return [f.name for f in dataclasses.fields(cls)]

    def arrays(self):
        return [getattr(self, n) for n in self.names()]

    def items(self):
        return [(n, getattr(self, n)) for n in self.names()]

    def map(self, fn, *others):
        return NetworkParams(*[fn(a, *[getattr(o, n) for o in others]) for n, a in self.items()])

    def copy(self):
        return self.map(np.copy)

    def zeros_like(self):
        return self.map(np.zeros_like)

    @property
    def dims(self):
        return NetworkDims(self.w1.shape[1], self.w1.shape[0], self.wg.shape[0])

    def flatten(self):
        return np.concatenate([a.ravel() for a in self.arrays()])

    @classmethod
    def unflatten(cls, vec, dims):
        shapes = param_shapes(dims)
        out, pos = [], 0
        for name in cls.names():
            shape = shapes[name]
            size = int(np.prod(shape))
            out.append(np.array(vec[pos:pos + size], dtype=np.float64).reshape(shape))
            pos += size
        if pos != len(vec):
            raise ShapeMismatch(f"expected {pos} values, got {len(vec)}")
        return cls(*out)


def param_shapes(dims):
    D, h, d = dims.input_dim, dims.hidden_dim, dims.output_dim
    return {
        "w1": (h, D), "b1": (h,),
        "w2": (h, h), "b2": (h,),
        "wg": (d, h), "bg": (d,),
        "wh": (d, h), "bh": (d,),
    }


@dataclass
class ForwardState:
    x: np.ndarray
    a1: np.ndarray        # first-layer pre-activation
    h1: np.ndarray        # relu(a1)
    f: np.ndarray         # encoder output
    z_raw: np.ndarray
    y_raw: np.ndarray
    z_norm: np.ndarray    # column norms of z_raw
    y_norm: np.ndarray
    z: np.ndarray         # unit-norm columns
    y: np.ndarray


def init_params(dims, seed):
    """Gaussian weights with std 1/sqrt(fan_in), zero biases."""
    rng = np.random.default_rng(seed)
    arrays = []
    for name, shape in param_shapes(dims).items():
        if name.startswith("b"):
            arrays.append(np.zeros(shape))
        else:
            arrays.append(rng.standard_normal(shape) / np.sqrt(shape[1]))
    return NetworkParams(*arrays)


def _normalize(m):
    norms = np.linalg.norm(m, axis=0)
    bad = np.flatnonzero(norms < _MIN_NORM)
    if bad.size:
        raise ZeroNormColumn(f"head output has zero-norm column(s): {bad[:10].tolist()}")
    return m / norms, norms


def forward(params, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != params.w1.shape[1]:
        raise ShapeMismatch(f"input of shape {x.shape} does not match input_dim {params.w1.shape[1]}")
    a1 = params.w1 @ x + params.b1[:, None]
    h1 = np.maximum(a1, 0.0)
    f = params.w2 @ h1 + params.b2[:, None]
    z_raw = params.wg @ f + params.bg[:, None]
    y_raw = params.wh @ f + params.bh[:, None]
    z, z_norm = _normalize(z_raw)
    y, y_norm = _normalize(y_raw)
    return ForwardState(x, a1, h1, f, z_raw, y_raw, z_norm, y_norm, z, y)


def normalize_backward(unit, norms, grad_unit):
    """Pull a gradient w.r.t. unit columns back to the raw columns."""
    radial = np.sum(unit * grad_unit, axis=0)
    return (grad_unit - unit * radial) / norms


def backward(params, state, grad_z, grad_y=None):
    """Parameter gradient given dL/dZ~ and dL/dY~ (the normalized heads)."""
    if grad_z.shape != state.z.shape:
        raise ShapeMismatch(f"grad_z shape {grad_z.shape} != {state.z.shape}")
    if grad_y is None:
        grad_y = np.zeros_like(state.y)
    elif grad_y.shape != state.y.shape:
        raise ShapeMismatch(f"grad_y shape {grad_y.shape} != {state.y.shape}")

    dz = normalize_backward(state.z, state.z_norm, grad_z)
    dy = normalize_backward(state.y, state.y_norm, grad_y)
    df = params.wg.T @ dz + params.wh.T @ dy
    dh1 = params.w2.T @ df
    da1 = dh1 * (state.a1 > 0)
    return NetworkParams(
        w1=da1 @ state.x.T, b1=da1.sum(axis=1),
        w2=df @ state.h1.T, b2=df.sum(axis=1),
        wg=dz @ state.f.T, bg=dz.sum(axis=1),
        wh=dy @ state.f.T, bh=dy.sum(axis=1),
    )


def sgd_step(params, grads, eta):
    if eta < 0:
        raise ValueError("eta must be non-negative")
    return params.map(lambda p, g: p - eta * g, grads)


class Adam:
    """Adaptive-moment optimizer; only used when explicitly configured."""

    def __init__(self, eta, beta1=0.9, beta2=0.999, eps=1e-8):
        self.eta, self.beta1, self.beta2, self.eps = eta, beta1, beta2, eps
        self.m = self.v = None
        self.t = 0

    def step(self, params, grads):
        if self.m is None:
            self.m, self.v = grads.zeros_like(), grads.zeros_like()
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        self.m = self.m.map(lambda m, g: b1 * m + (1 - b1) * g, grads)
        self.v = self.v.map(lambda v, g: b2 * v + (1 - b2) * g * g, grads)
        c1, c2 = 1 - b1**self.t, 1 - b2**self.t
        return params.map(
            lambda p, m, v: p - self.eta * (m / c1) / (np.sqrt(v / c2) + self.eps),
            self.m, self.v,
        )


# Checkpoint layout (little-endian):
#   4s magic "TDSP" | u32 version | u32 input_dim | u32 hidden_dim | u32 output_dim
#   then w1, b1, w2, b2, wg, bg, wh, bh as f64, row-major.

def save_checkpoint(path, params):
    dims = params.dims
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sIIII", CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
                             dims.input_dim, dims.hidden_dim, dims.output_dim))
        fh.write(params.flatten().astype("<f8").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    header = struct.calcsize("<4sIIII")
    if len(raw) < header:
        raise DataError(f"{path}: truncated checkpoint")
    magic, version, D, h, d = struct.unpack_from("<4sIIII", raw)
    if magic != CHECKPOINT_MAGIC:
        raise DataError(f"{path}: bad checkpoint magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    dims = NetworkDims(D, h, d)
    vec = np.frombuffer(raw, dtype="<f8", offset=header)
    try:
        return NetworkParams.unflatten(vec, dims)
    except ShapeMismatch as exc:
        raise DataError(f"{path}: {exc}") from exc
