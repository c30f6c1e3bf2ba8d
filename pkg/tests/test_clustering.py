import numpy as np
import pytest

from src.clustering import (GroupAssignment, RsuScheduler, allocate_rbs, jacobi_eigh, kmeans,
                            normalized_laplacian, similarity, spectral_embed)
from src.errors import NumericalError
from src.params import SimParams


def test_similarity_kernel():
    S = similarity(np.array([[0.0, 0.0], [30.0, 0.0], [181.0, 0.0]]), gamma=30.0, phi=150.0)
    assert np.diag(S).tolist() == [1.0, 1.0, 1.0]
    assert S[0, 1] == pytest.approx(np.exp(-1.0))
    assert S[1, 2] == 0.0
    assert np.array_equal(S, S.T)


@pytest.mark.parametrize('seed', range(20))
def test_jacobi_matches_cubic_roots(seed):
    rng = np.random.default_rng(seed)
    L = normalized_laplacian(similarity(rng.uniform(0.0, 80.0, size=(3, 2)), 30.0, 150.0))

    w, _ = jacobi_eigh(L)
    roots = np.sort(np.roots(np.poly(L)).real)
    assert w == pytest.approx(roots, abs=1e-7)


@pytest.mark.parametrize('n', [9, 10])
def test_jacobi_decomposes_symmetric_matrices(n):
    rng = np.random.default_rng(n)
    M = rng.normal(size=(n, n))
    A = M + M.T

    w, V = jacobi_eigh(A)
    assert np.all(np.diff(w) >= 0)
    assert np.allclose(V.T @ V, np.eye(n), atol=1e-10)
    assert np.allclose(A @ V, V * w, atol=1e-9)
    assert w == pytest.approx(np.linalg.eigvalsh(A), abs=1e-9)


def test_jacobi_reports_non_convergence():
    M = np.random.default_rng(0).normal(size=(8, 8))
    with pytest.raises(NumericalError) as excinfo:
        jacobi_eigh(M + M.T, max_sweeps=1)
    assert excinfo.value.diagnostics['sweeps'] == 1


def test_laplacian_spectrum_bounds():
    rng = np.random.default_rng(3)
    L = normalized_laplacian(similarity(rng.uniform(0.0, 250.0, size=(12, 2)), 30.0, 150.0))
    w, _ = jacobi_eigh(L)
    assert w[0] == pytest.approx(0.0, abs=1e-10)
    assert w.min() >= -1e-10 and w.max() <= 2.0 + 1e-10


def _two_blocks():
    rng = np.random.default_rng(8)
    near = rng.uniform(0.0, 20.0, size=(4, 2))
    far = rng.uniform(0.0, 20.0, size=(4, 2)) + 500.0
    return np.vstack([near, far])


@pytest.mark.parametrize('eigensolver', ['jacobi', 'numpy'])
def test_embedding_separates_disconnected_blocks(eigensolver):
    embedding = spectral_embed(similarity(_two_blocks(), 30.0, 150.0), 2, eigensolver)

    assert embedding.eigenvalues == pytest.approx([0.0, 0.0], abs=1e-10)
    assert not embedding.degenerate
    assert np.allclose(embedding.vectors.T @ embedding.vectors, np.eye(2), atol=1e-8)

    labels = kmeans(embedding.rows, 2, seed=1).labels
    assert len(set(labels[:4])) == 1 and len(set(labels[4:])) == 1
    assert labels[0] != labels[4]


def test_isolated_pairs_are_flagged_degenerate():
    points = np.array([[0.0, 0.0], [1000.0, 0.0], [0.0, 1000.0], [1000.0, 1000.0]])
    embedding = spectral_embed(similarity(points, 30.0, 150.0), 2)
    assert embedding.degenerate


def test_kmeans_with_one_pair_per_group():
    labels = kmeans(np.eye(3), 3, seed=0).labels
    assert sorted(labels.tolist()) == [0, 1, 2]


def test_kmeans_is_deterministic():
    rows = np.random.default_rng(5).normal(size=(30, 3))
    assert np.array_equal(kmeans(rows, 4, seed=9).labels, kmeans(rows, 4, seed=9).labels)


def _assignment(sizes, g=None):
    labels = np.concatenate([np.full(size, j) for j, size in enumerate(sizes)])
    return GroupAssignment(labels=labels, g=g or len(sizes))


def test_round_robin_split():
    rb_map = allocate_rbs(_assignment([8]), 20)
    assert rb_map.counts.tolist() == [3, 3, 3, 3, 2, 2, 2, 2]
    assert rb_map.eta.sum(axis=0).tolist() == [1] * 20


def test_single_member_gets_every_rb():
    rb_map = allocate_rbs(_assignment([1, 3]), 20)
    assert rb_map.counts[0] == 20
    assert rb_map.rb_list(0) == list(range(20))


def test_overfull_group_starves_the_tail():
    rb_map = allocate_rbs(_assignment([25]), 20)
    assert rb_map.counts.tolist() == [1] * 20 + [0] * 5
    assert rb_map.starved == [20, 21, 22, 23, 24]


def test_rbs_are_orthogonal_within_each_group():
    assignment = _assignment([5, 7, 2])
    rb_map = allocate_rbs(assignment, 20)
    for members in assignment.groups:
        assert rb_map.eta[members].sum(axis=0).max() == 1


def test_scheduler_reclusters_on_the_cadence():
    params = SimParams.from_mapping({'K': 6, 'g': 2, 'N': 4, 'T0': 10})
    scheduler = RsuScheduler(params, np.random.default_rng(0))
    midpoints = np.random.default_rng(1).uniform(0.0, 250.0, size=(6, 2))

    first = scheduler.update(0, midpoints)
    assert first.epoch == 0
    assert scheduler.update(5, midpoints) is first
    assert scheduler.update(10, midpoints).epoch == 1
    assert len(scheduler.history) == 12
    assert set(scheduler.history[0]) == {'slot', 'epoch', 'pair', 'group', 'rbs'}


def test_scheduler_with_fewer_pairs_than_groups():
    params = SimParams.from_mapping({'K': 1, 'g': 2, 'N': 5})
    rb_map = RsuScheduler(params, np.random.default_rng(0)).update(0, np.zeros((1, 2)))
    assert rb_map.counts.tolist() == [5]
