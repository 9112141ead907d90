"""Clustering accuracy under optimal label matching, and NMI."""

import numpy as np
from scipy.optimize import linear_sum_assignment
from sklearn.metrics import normalized_mutual_info_score

from .errors import LengthMismatch, NumericError


def hungarian(cost):
    """Optimal assignment for a square cost matrix; ``out[i]`` is row i's column."""
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError(f"cost must be square, got {cost.shape}")
    if not np.isfinite(cost).all():
        raise NumericError("cost matrix has non-finite entries")
    rows, cols = linear_sum_assignment(cost)
    out = np.empty(cost.shape[0], dtype=np.int64)
    out[rows] = cols
    return out


def _labels(pred, gt):
    pred = np.asarray(pred).ravel()
    gt = np.asarray(gt).ravel()
    if pred.shape != gt.shape:
        raise LengthMismatch(f"label vectors differ in length: {pred.size} vs {gt.size}")
    if pred.size == 0:
        raise ValueError("empty label vectors")
    return pred, gt


def confusion(pred, gt):
    pred, gt = _labels(pred, gt)
    _, p = np.unique(pred, return_inverse=True)
    _, g = np.unique(gt, return_inverse=True)
    k = max(p.max(), g.max()) + 1
    table = np.zeros((k, k), dtype=np.int64)
    np.add.at(table, (p, g), 1)
    return table


def accuracy(pred, gt):
    table = confusion(pred, gt)
    match = hungarian(-table)
    return float(table[np.arange(len(match)), match].sum() / table.sum())


def nmi(pred, gt, average="arithmetic"):
    """Normalized mutual information; ``average`` is "arithmetic" or "geometric"."""
    pred, gt = _labels(pred, gt)
    single_p = np.unique(pred).size == 1
    single_g = np.unique(gt).size == 1
    if single_p and single_g:
        return 1.0
    if single_p or single_g:
        return 0.0
    return float(normalized_mutual_info_score(gt, pred, average_method=average))
