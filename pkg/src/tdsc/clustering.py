"""Normalized spectral clustering of a symmetric affinity."""

import logging
import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.cluster import KMeans
from sklearn.exceptions import ConvergenceWarning

from .errors import KTooLarge

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SpectralConfig:
    k: int
    kmeans_restarts: int = 10
    kmeans_max_iter: int = 300
    seed: int = 0

    def __post_init__(self):
        if self.k < 1 or self.kmeans_restarts < 1:
            raise ValueError("k and kmeans_restarts must be >= 1")


def spectral_embed(a, k):
    """Rows of the k smallest eigenvectors of I - D^-1/2 A D^-1/2, row-normalized.

    Eigenvectors are ordered by ascending eigenvalue and sign-fixed so that
    their largest-magnitude entry is positive. Isolated vertices give zero rows.
    """
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[0]
    if k > n:
        raise KTooLarge(f"k={k} exceeds number of frames {n}")
    deg = a.sum(axis=1)
    inv_sqrt = np.zeros(n)
    inv_sqrt[deg > 0] = 1.0 / np.sqrt(deg[deg > 0])
    l_sym = np.eye(n) - inv_sqrt[:, None] * a * inv_sqrt[None, :]
    l_sym = 0.5 * (l_sym + l_sym.T)
    _, vecs = np.linalg.eigh(l_sym)
    e = vecs[:, :k].copy()
    pivot = np.argmax(np.abs(e), axis=0)
    e *= np.sign(e[pivot, np.arange(k)])[None, :]
    e[deg == 0] = 0.0
    norms = np.linalg.norm(e, axis=1)
    nz = norms > 0
    e[nz] /= norms[nz, None]
    return e


def kmeans(e, cfg):
    """Best-of-restarts k-means++/Lloyd; labels renumbered by first appearance."""
    e = np.asarray(e, dtype=np.float64)
    if cfg.k > e.shape[0]:
        raise KTooLarge(f"k={cfg.k} exceeds number of points {e.shape[0]}")
    if cfg.k == 1:
        return np.zeros(e.shape[0], dtype=np.int64)
    km = KMeans(n_clusters=cfg.k, n_init=cfg.kmeans_restarts, max_iter=cfg.kmeans_max_iter,
                random_state=cfg.seed, algorithm="lloyd")
    with warnings.catch_warnings():
        # identical points leave fewer distinct clusters than k; that is fine
        warnings.simplefilter("ignore", ConvergenceWarning)
        labels = km.fit_predict(e)
    return canonical_labels(labels)


def canonical_labels(labels):
    """Relabel so cluster ids appear in order 0, 1, 2, ... along the sequence."""
    labels = np.asarray(labels)
    _, first = np.unique(labels, return_index=True)
    order = labels[np.sort(first)]
    remap = {old: new for new, old in enumerate(order)}
    return np.array([remap[v] for v in labels], dtype=np.int64)


def _fill_isolated(labels, isolated):
    """Give each isolated frame the label of its nearest non-isolated neighbour in time."""
    good = np.flatnonzero(~isolated)
    if good.size == 0:
        return labels
    out = labels.copy()
    for i in np.flatnonzero(isolated):
        j = good[np.argmin(np.abs(good - i))]
        out[i] = labels[j]
    return out


def spectral_clustering(a, cfg):
    a = np.asarray(a, dtype=np.float64)
    e = spectral_embed(a, cfg.k)
    labels = kmeans(e, cfg)
    isolated = a.sum(axis=1) == 0
    if isolated.any():
        log.warning("%d isolated frame(s); assigning them to temporal neighbours", isolated.sum())
        labels = canonical_labels(_fill_isolated(labels, isolated))
    return labels


def ncut_value(a, labels):
    """Normalized-cut objective sum_k cut(S_k, rest) / vol(S_k)."""
    a = np.asarray(a, dtype=np.float64)
    deg = a.sum(axis=1)
    total = 0.0
    for c in np.unique(labels):
        inside = labels == c
        vol = deg[inside].sum()
        if vol == 0:
            continue
        total += a[np.ix_(inside, ~inside)].sum() / vol
    return float(total)
