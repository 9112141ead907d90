import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tdsc.affinity import symmetrize
from tdsc.clustering import (
    SpectralConfig,
    kmeans,
    ncut_value,
    spectral_clustering,
    spectral_embed,
)
from tdsc.errors import KTooLarge
from tdsc.metrics import accuracy


def block_affinity(rng, sizes, dense=True):
    n = sum(sizes)
    a = np.zeros((n, n))
    gt = np.repeat(np.arange(len(sizes)), sizes)
    start = 0
    for m in sizes:
        blk = rng.uniform(0.2, 1.0, size=(m, m)) if dense else np.ones((m, m))
        a[start:start + m, start:start + m] = blk + blk.T
        start += m
    np.fill_diagonal(a, 0)
    return a, gt


def test_embed_block_rows_constant():
    a, gt = block_affinity(None, [4, 5], dense=False)
    e = spectral_embed(a, 2)
    for c in range(2):
        rows = e[gt == c]
        assert np.abs(rows - rows[0]).max() < 1e-8
    assert np.linalg.norm(e[0] - e[-1]) > 1.0


def test_embed_k1_rows_equal():
    rng = np.random.default_rng(0)
    a = symmetrize(rng.uniform(size=(6, 6)))
    np.fill_diagonal(a, 0)
    e = spectral_embed(a, 1)
    assert e.shape == (6, 1)
    np.testing.assert_allclose(e, 1.0)


def test_embed_columns_are_eigenvectors():
    rng = np.random.default_rng(1)
    n = 9
    a = symmetrize(rng.uniform(size=(n, n)))
    d = a.sum(axis=1)
    l_sym = np.eye(n) - a / np.sqrt(np.outer(d, d))
    vals, vecs = np.linalg.eigh(l_sym)
    for j in range(3):
        v = vecs[:, j]
        assert np.linalg.norm(l_sym @ v - vals[j] * v) < 1e-8
    # rows of the embedding are renormalized eigenvector rows
    e = spectral_embed(a, 3)
    raw = vecs[:, :3] * np.sign(vecs[np.argmax(np.abs(vecs[:, :3]), axis=0), np.arange(3)])
    np.testing.assert_allclose(e, raw / np.linalg.norm(raw, axis=1, keepdims=True), atol=1e-8)


def test_kmeans_separated_clouds():
    rng = np.random.default_rng(0)
    e = np.vstack([rng.normal(0, 0.01, (5, 2)), rng.normal(5, 0.01, (5, 2))])
    labels = kmeans(e, SpectralConfig(k=2))
    assert labels.tolist() == [0] * 5 + [1] * 5


def test_kmeans_identical_points():
    labels = kmeans(np.ones((6, 2)), SpectralConfig(k=2))
    assert len(set(labels.tolist())) == 1


def _wcss(e, labels):
    return sum(((e[labels == c] - e[labels == c].mean(axis=0)) ** 2).sum() for c in np.unique(labels))


def test_kmeans_restarts_dominate_single_run():
    rng = np.random.default_rng(3)
    e = rng.standard_normal((60, 3))
    best = kmeans(e, SpectralConfig(k=4, kmeans_restarts=10, seed=7))
    single = kmeans(e, SpectralConfig(k=4, kmeans_restarts=1, seed=7))
    assert _wcss(e, best) <= _wcss(e, single) + 1e-12


def test_kmeans_k_too_large():
    with pytest.raises(KTooLarge):
        kmeans(np.zeros((3, 2)), SpectralConfig(k=4))
    with pytest.raises(KTooLarge):
        spectral_embed(np.zeros((3, 3)), 4)


def test_spectral_three_blocks():
    a, gt = block_affinity(np.random.default_rng(0), [4, 6, 5])
    labels = spectral_clustering(a, SpectralConfig(k=3))
    assert len(set(labels.tolist())) == 3
    assert accuracy(labels, gt) == 1.0


def test_spectral_banded_two_segments_contiguous():
    n = 20
    idx = np.arange(n)
    near = np.abs(idx[:, None] - idx[None, :]) <= 3
    same = (idx[:, None] < 10) == (idx[None, :] < 10)
    a = np.where(near & same, 1.0, 0.0)
    np.fill_diagonal(a, 0)
    labels = spectral_clustering(a, SpectralConfig(k=2))
    assert labels.tolist() == [0] * 10 + [1] * 10


def test_spectral_k_equals_n():
    rng = np.random.default_rng(2)
    a = symmetrize(rng.uniform(size=(5, 5)))
    np.fill_diagonal(a, 0)
    labels = spectral_clustering(a, SpectralConfig(k=5))
    assert sorted(labels.tolist()) == list(range(5))


def test_isolated_frames_follow_temporal_neighbour():
    a, _ = block_affinity(None, [4, 4], dense=False)
    a = np.pad(a, ((0, 1), (0, 1)))
    labels = spectral_clustering(a, SpectralConfig(k=2))
    assert labels[-1] == labels[-2]


@pytest.mark.parametrize("seed", range(20))
def test_block_diagonal_exactness(seed):
    rng = np.random.default_rng(seed)
    k = [2, 3, 4][seed % 3]
    sizes = rng.integers(3, 9, size=k).tolist()
    a, gt = block_affinity(rng, sizes)
    perm = rng.permutation(gt.size)
    labels = spectral_clustering(a[np.ix_(perm, perm)], SpectralConfig(k=k, seed=seed))
    assert accuracy(labels, gt[perm]) == 1.0


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_permutation_equivariance(seed):
    rng = np.random.default_rng(seed)
    a, gt = block_affinity(rng, [5, 6, 4])
    a += 0.01 * symmetrize(rng.uniform(size=a.shape))
    np.fill_diagonal(a, 0)
    cfg = SpectralConfig(k=3)
    base = spectral_clustering(a, cfg)
    perm = rng.permutation(gt.size)
    permuted = spectral_clustering(a[np.ix_(perm, perm)], cfg)
    assert accuracy(permuted, base[perm]) == 1.0


def test_determinism():
    rng = np.random.default_rng(5)
    a = symmetrize(rng.uniform(size=(15, 15)))
    cfg = SpectralConfig(k=3, seed=1)
    assert np.array_equal(spectral_clustering(a, cfg), spectral_clustering(a, cfg))


def test_ncut_value():
    a, gt = block_affinity(None, [3, 3], dense=False)
    assert ncut_value(a, gt) == 0.0
    assert ncut_value(a, np.array([0, 0, 1, 1, 1, 1])) > 0
