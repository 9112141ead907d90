"""Self-expressive coefficients: similarity, temporal mask, Sinkhorn, momentum averaging.

The coefficient matrix for one training step is built as

    S = Y~^T Y~  ->  K = mask * exp(S / kappa)  ->  C = sinkhorn(K)

and folded into the running mean ``c_bar``. Each stage has a matching
``*_backward`` so the trainer can push dL/dC back onto Y~.
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import AsymmetricInput, EmptyRowOrColumn, ShapeMismatch


@dataclass(frozen=True)
class TemporalMask:
    """Admissible coefficients: 0 < |i - j| <= tau. ``tau=None`` disables the band."""

    n: int
    tau: int | None

    def matrix(self):
        idx = np.arange(self.n)
        gap = np.abs(idx[:, None] - idx[None, :])
        if self.tau is None:
            return gap > 0
        return (gap > 0) & (gap <= self.tau)


def temporal_weights(n, s):
    """Binary window graph: w_ij = 1 iff 0 < |i - j| <= s/2."""
    if n < 1 or s < 0:
        raise ValueError("temporal_weights needs n >= 1 and s >= 0")
    idx = np.arange(n)
    gap = np.abs(idx[:, None] - idx[None, :])
    return ((gap <= s / 2) & (gap > 0)).astype(np.float64)


def graph_laplacian(w):
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ShapeMismatch(f"weights must be square, got {w.shape}")
    if not np.allclose(w, w.T, rtol=0, atol=1e-12):
        raise AsymmetricInput("graph weights must be symmetric")
    if (w < 0).any():
        raise ValueError("graph weights must be nonnegative")
    return np.diag(w.sum(axis=1)) - w


def similarity(y_tilde):
    return y_tilde.T @ y_tilde


def similarity_backward(y_tilde, grad_s):
    return y_tilde @ (grad_s + grad_s.T)


def mask_and_lift(s, mask, kappa=1.0):
    """exp(s / kappa) on admissible entries, exact zeros elsewhere."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    m = mask.matrix() if isinstance(mask, TemporalMask) else np.asarray(mask, dtype=bool)
    return np.where(m, np.exp(np.where(m, s, 0.0) / kappa), 0.0)


def mask_and_lift_backward(k, grad_k, kappa=1.0):
    # zero entries of k carry no gradient, which is exactly the mask
    return grad_k * k / kappa


@dataclass
class SinkhornTrace:
    # per normalization: ("row" | "col", divisors, normalized output)
    steps: list
    sweeps: int
    deviation: float


def _check_support(k):
    rows = np.flatnonzero(~(k > 0).any(axis=1))
    cols = np.flatnonzero(~(k > 0).any(axis=0))
    if rows.size or cols.size:
        raise EmptyRowOrColumn(
            f"all-zero rows {rows[:10].tolist()} / columns {cols[:10].tolist()}; "
            "the temporal mask leaves nothing to normalize"
        )


def sinkhorn_project(k, iters=10, tol=1e-6, return_trace=False):
    """Alternate row and column normalization towards unit row/column sums.

    Runs at most ``iters`` sweeps (row pass then column pass) and stops early
    once every row sum is within ``tol`` of 1; column sums are exactly 1 after
    each sweep. Pass ``tol=0`` for a fixed number of sweeps. Zero entries stay
    zero.
    """
    k = np.asarray(k, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise ShapeMismatch(f"sinkhorn needs a square matrix, got {k.shape}")
    if (k < 0).any():
        raise ValueError("sinkhorn input must be nonnegative")
    _check_support(k)

    p = k
    steps = []
    deviation = float(max(np.abs(p.sum(axis=1) - 1).max(), np.abs(p.sum(axis=0) - 1).max()))
    sweeps = 0
    for sweeps in range(1, iters + 1):
        r = p.sum(axis=1)
        p = p / r[:, None]
        steps.append(("row", r, p))
        c = p.sum(axis=0)
        p = p / c[None, :]
        steps.append(("col", c, p))
        deviation = float(np.abs(p.sum(axis=1) - 1).max())
        if deviation < tol:
            break
    if return_trace:
        return p, SinkhornTrace(steps, sweeps, deviation)
    return p


def sinkhorn_backward(trace, grad_out):
    """Reverse-mode pass through the unrolled normalizations in ``trace``."""
    g = grad_out
    for kind, div, out in reversed(trace.steps):
        if kind == "row":
            g = (g - np.sum(g * out, axis=1, keepdims=True)) / div[:, None]
        else:
            g = (g - np.sum(g * out, axis=0, keepdims=True)) / div[None, :]
    return g


def momentum_schedule(alpha0, t, T):
    """Linearly decaying momentum weight alpha0 * (1 - t/T)."""
    if not 0 < alpha0 <= 1:
        raise ValueError("alpha0 must lie in (0, 1]")
    if not 1 <= t <= T:
        raise ValueError(f"t must lie in [1, T], got t={t}, T={T}")
    return alpha0 * (1.0 - t / T)


def initial_c_bar(n, s, normalize=True):
    """Window graph used to seed the running mean, optionally row-stochastic."""
    w = temporal_weights(n, s)
    if not normalize:
        return w
    sums = w.sum(axis=1, keepdims=True)
    return np.divide(w, sums, out=np.zeros_like(w), where=sums > 0)


@dataclass
class AffinityState:
    c: np.ndarray
    c_bar: np.ndarray
    t: int
    alpha0: float
    T: int
    enabled: bool = True

    @classmethod
    def start(cls, n, s, alpha0, T, enabled=True, normalize_init=True):
        c_bar = initial_c_bar(n, s, normalize_init)
        return cls(np.zeros((n, n)), c_bar, 0, alpha0, T, enabled)

    def next_alpha(self):
        """Weight the upcoming update gives to the fresh coefficients."""
        if not self.enabled:
            return 1.0
        return momentum_schedule(self.alpha0, self.t + 1, self.T)


def tma_update(state, c_new, alpha=None):
    """Fold ``c_new`` into the running mean and advance the step counter."""
    if c_new.shape != state.c_bar.shape:
        raise ShapeMismatch(f"c_new shape {c_new.shape} != {state.c_bar.shape}")
    if alpha is None:
        alpha = state.next_alpha()
    c_bar = (1.0 - alpha) * state.c_bar + alpha * c_new
    np.fill_diagonal(c_bar, 0.0)
    return replace(state, c=c_new, c_bar=c_bar, t=state.t + 1)


def symmetrize(c_bar):
    return 0.5 * (np.abs(c_bar) + np.abs(c_bar).T)
