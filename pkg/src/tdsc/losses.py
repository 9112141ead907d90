"""Training objective and diagnostics.

    L = -rho(Z, eps) + lambda1 * ||Z - Z C_bar||_F^2 + lambda2 * tr(Z L Z^T)

``z`` is the matrix of unit-norm representations (d x N).
"""

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch
from .numerics import coding_rate, coding_rate_grad, logdet_psd


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 0.2
    lambda2: float = 20.0
    eps: float = 0.01
    # ablation switches; a dropped term contributes neither value nor gradient
    use_rho: bool = True

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.eps <= 0:
            raise ValueError("eps must be positive")


@dataclass(frozen=True)
class LossBreakdown:
    rho: float
    se_residual: float
    temporal: float
    total: float

    def as_dict(self):
        return {"rho": self.rho, "se_residual": self.se_residual,
                "temporal": self.temporal, "total": self.total}


def _check(z, m, what):
    if m.shape != (z.shape[1], z.shape[1]):
        raise ShapeMismatch(f"{what} must be {z.shape[1]}x{z.shape[1]}, got {m.shape}")


def loss_se_residual(z, c_bar):
    _check(z, c_bar, "c_bar")
    r = z - z @ c_bar
    return float(np.sum(r * r))


def loss_temporal(z, l):
    _check(z, l, "laplacian")
    return float(np.sum((z @ l) * z))


def total_loss(z, c_bar, l, weights):
    rho = coding_rate(z, weights.eps) if weights.use_rho else 0.0
    se = loss_se_residual(z, c_bar)
    tmp = loss_temporal(z, l)
    total = -rho + weights.lambda1 * se + weights.lambda2 * tmp
    return LossBreakdown(rho, se, tmp, total)


def total_loss_grads(z, c_bar, l, weights):
    """Return (dL/dZ, dL/dC_bar) for :func:`total_loss`."""
    _check(z, c_bar, "c_bar")
    _check(z, l, "laplacian")
    resid = z - z @ c_bar
    n = z.shape[1]
    grad_z = 2.0 * weights.lambda1 * resid @ (np.eye(n) - c_bar).T
    grad_z += 2.0 * weights.lambda2 * z @ l
    if weights.use_rho:
        grad_z -= coding_rate_grad(z, weights.eps)
    grad_c = -2.0 * weights.lambda1 * z.T @ resid
    return grad_z, grad_c


def rho_relaxed(z, gamma, eps):
    """Affinity-relaxed class coding rate, averaged over the columns of ``gamma``.

    Diagnostic only; it is not part of the training objective.
    """
    z = np.asarray(z, dtype=np.float64)
    gamma = np.asarray(gamma, dtype=np.float64)
    d, n = z.shape
    _check(z, gamma, "gamma")
    if (gamma < 0).any():
        raise ValueError("gamma must be nonnegative")
    scale = d / eps**2
    total = 0.0
    for j in range(n):
        # Z Diag(g) Z^T through the N x N side keeps this cheap for d > N
        zg = z * np.sqrt(gamma[:, j])[None, :]
        if d <= n:
            total += logdet_psd(np.eye(d) + scale * zg @ zg.T)
        else:
            total += logdet_psd(np.eye(n) + scale * zg.T @ zg)
    return total / n


def commutator_diagnostic(z, c_bar, l, weights):
    """Relative commutator between Z^T Z and (I - C)(I - C)^T + (lambda2/lambda1) L.

    Zero when the two matrices share eigenvectors; logged, never optimized.
    """
    if weights.lambda1 <= 0:
        raise ValueError("commutator diagnostic needs lambda1 > 0")
    n = z.shape[1]
    g = z.T @ z
    ic = np.eye(n) - c_bar
    m = ic @ ic.T + (weights.lambda2 / weights.lambda1) * l
    denom = np.linalg.norm(g) * np.linalg.norm(m)
    if denom == 0:
        raise ZeroDivisionError("commutator diagnostic undefined for Z = 0 or M = 0")
    return float(np.linalg.norm(g @ m - m @ g) / denom)
