"""Dense numerics: PD log-determinants, the total coding rate and its gradient.

Matrices are plain 2-D float64 ``numpy`` arrays. Representation matrices are
stored frames-as-columns, so ``z`` has shape ``(d, N)``.
"""

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, FactorizationFailed, NonFiniteEvaluation

# finite-difference step used throughout the gradient checks
FD_STEP = 1e-5


def _as_matrix(m):
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def _cholesky(m):
    try:
        return scipy.linalg.cho_factor(m, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise FactorizationFailed(f"Cholesky factorization failed: {exc}") from exc


def logdet_psd(m, jitter=0.0):
    """Log-determinant of a symmetric positive definite matrix via Cholesky."""
    m = _as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"logdet_psd needs a square matrix, got {m.shape}")
    scale = max(np.abs(m).max(), 1.0)
    if np.abs(m - m.T).max() > 1e-10 * scale:
        raise FactorizationFailed("matrix is not symmetric")
    if jitter:
        m = m + jitter * np.eye(m.shape[0])
    c, _ = _cholesky(m)
    return 2.0 * float(np.sum(np.log(np.diag(c))))


def coding_rate_alpha(d, n, eps):
    if eps <= 0:
        raise ValueError("eps must be positive")
    if d < 1 or n < 1:
        raise DimensionMismatch("coding rate needs d, n >= 1")
    return d / (n * eps**2)


def _gram_side(d, n, gram):
    if gram == "auto":
        return "d" if d <= n else "n"
    if gram not in ("d", "n"):
        raise ValueError(f"gram must be 'auto', 'd' or 'n', not {gram!r}")
    return gram


def coding_rate(z, eps, gram="auto"):
    """Total coding rate ``1/2 logdet(I + d/(N eps^2) Z Z^T)``.

    ``gram`` picks which Gram matrix enters the determinant: ``"d"`` uses the
    d x d matrix ``Z Z^T``, ``"n"`` the N x N matrix ``Z^T Z``; both give the
    same value. ``"auto"`` picks the smaller one (ties go to d x d).
    """
    z = _as_matrix(z)
    d, n = z.shape
    alpha = coding_rate_alpha(d, n, eps)
    if _gram_side(d, n, gram) == "d":
        g = z @ z.T
    else:
        g = z.T @ z
    return 0.5 * logdet_psd(np.eye(g.shape[0]) + alpha * g)


def coding_rate_grad(z, eps, gram="auto"):
    """Gradient of :func:`coding_rate` with respect to ``z``."""
    z = _as_matrix(z)
    d, n = z.shape
    alpha = coding_rate_alpha(d, n, eps)
    if _gram_side(d, n, gram) == "d":
        factor = _cholesky(np.eye(d) + alpha * (z @ z.T))
        return alpha * scipy.linalg.cho_solve(factor, z)
    factor = _cholesky(np.eye(n) + alpha * (z.T @ z))
    # Z (I + a Z^T Z)^{-1}; the inverse is symmetric so solve on the transpose
    return alpha * scipy.linalg.cho_solve(factor, z.T).T


def finite_diff_grad(f, x, h=FD_STEP):
    """Central-difference gradient of scalar ``f`` at ``x`` (any shape)."""
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.array(x, dtype=np.float64)
    grad = np.empty_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteEvaluation(f"f is not finite around flat index {i}")
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad
