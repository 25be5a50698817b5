import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prosoda.units import Codebook, ReducedUnits, assign, expand, fit_kmeans, reduce


def test_reduce_worked_example():
    r = reduce([0, 0, 1, 1, 1, 2])
    assert r.units.tolist() == [0, 1, 2] and r.durations.tolist() == [2, 3, 1]
    assert expand(r).tolist() == [0, 0, 1, 1, 1, 2]


def test_reduce_single_and_expand_single():
    r = reduce([5])
    assert r.units.tolist() == [5] and r.durations.tolist() == [1]
    assert expand(ReducedUnits([7], [4])).tolist() == [7, 7, 7, 7]


def test_reduce_expand_errors():
    with pytest.raises(ValueError):
        reduce([])
    with pytest.raises(ValueError):
        expand(ReducedUnits([1, 2], [1, 0]))
    with pytest.raises(ValueError):
        ReducedUnits([1, 1], [1, 1])
    with pytest.raises(ValueError):
        expand(ReducedUnits([1, 2], [1, 1]), durations=[1])


def test_reduce_expand_bijection_10k():
    rng = np.random.default_rng(0)
    for _ in range(10_000):
        n = int(rng.integers(1, 40))
        u = rng.integers(0, int(rng.integers(1, 6)), n)
        r = reduce(u)
        assert np.all(r.units[1:] != r.units[:-1])
        assert np.all(r.durations >= 1) and r.durations.sum() == n
        assert np.array_equal(expand(r), u)
        again = reduce(expand(r))
        assert np.array_equal(again.units, r.units) and np.array_equal(again.durations, r.durations)


@given(st.lists(st.tuples(st.integers(0, 99), st.integers(1, 9)), min_size=1, max_size=30))
def test_expand_then_reduce_identity(pairs):
    units, durs = [], []
    for u, d in pairs:
        if units and units[-1] == u:
            continue
        units.append(u)
        durs.append(d)
    r = ReducedUnits(units, durs)
    back = reduce(expand(r))
    assert back.units.tolist() == units and back.durations.tolist() == durs


# ---------------------------------------------------------------- k-means


def test_two_separated_clusters():
    x = np.vstack([np.zeros((10, 2)), np.full((10, 2), 10.0)])
    cb = fit_kmeans([x], K=2, seed=0)
    got = sorted(map(tuple, cb.centroids))
    assert got == [(0.0, 0.0), (10.0, 10.0)]


def test_planted_blobs():
    rng = np.random.default_rng(4)
    centers = np.array([[0.0, 0.0], [6.0, 0.0], [0.0, 6.0]])
    truth = np.repeat(np.arange(3), 4 * 50)
    # 12 blobs, 4 around each of the 3 centres
    x = centers[truth] + rng.standard_normal((truth.size, 2))
    cb = fit_kmeans([x], K=3, seed=1)
    labels = assign(x, cb)
    agree = max(np.mean(perm[labels] == truth) for perm in map(np.array, __import__("itertools").permutations(range(3))))
    assert agree >= 0.95


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 8))
def test_inertia_non_increasing_and_fixed_point(seed, k):
    x = np.random.default_rng(seed).standard_normal((120, 3))
    cb = fit_kmeans([x], K=k, seed=seed)
    h = np.array(cb.inertia_history)
    assert np.all(np.diff(h) <= 1e-9 * h[0])
    labels = assign(x, cb)
    # one more Lloyd update barely moves the centroids
    means = np.array([x[labels == j].mean(axis=0) if np.any(labels == j) else cb.centroids[j] for j in range(k)])
    assert np.max(np.linalg.norm(means - cb.centroids, axis=1)) < 1e-6 or len(h) == 302


def test_kmeans_deterministic():
    x = np.random.default_rng(2).standard_normal((500, 4))
    a = fit_kmeans([x[:250], x[250:]], K=10, seed=7)
    b = fit_kmeans([x[:250], x[250:]], K=10, seed=7)
    assert np.array_equal(a.centroids, b.centroids)


def test_kmeans_errors():
    with pytest.raises(ValueError):
        fit_kmeans([np.zeros((3, 2))], K=5)
    with pytest.raises(ValueError):
        fit_kmeans([np.zeros((10, 2))], K=2)
    with pytest.raises(ValueError):
        Codebook(np.array([[1.0, 2.0]]))
    with pytest.raises(ValueError):
        Codebook(np.array([[1.0, 2.0], [1.0, 2.0]]))
    with pytest.raises(ValueError):
        Codebook(np.array([[1.0, np.nan], [1.0, 2.0]]))


def test_kmeans_reseeds_empty_clusters():
    # duplicate-heavy data makes empty clusters likely after seeding
    x = np.vstack([np.zeros((50, 1)), np.ones((3, 1)), [[2.0], [3.0], [4.0]]])
    cb = fit_kmeans([x], K=5, seed=0)
    assert len({float(c) for c in cb.centroids[:, 0]}) == 5


def test_assign_examples():
    cents = np.array([[9.0, 9.0], [8.0, 8.0], [0.0, 1.0], [5.0, 5.0], [4.0, 4.0], [0.0, -1.0], [6.0, 0.0], [3.0, 2.0]])
    cb = Codebook(cents)
    assert assign(cents[7:8], cb).tolist() == [7]
    assert assign(np.zeros((1, 2)), cb).tolist() == [2]
    with pytest.raises(ValueError):
        assign(np.zeros((1, 3)), cb)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_assign_is_argmin(seed):
    rng = np.random.default_rng(seed)
    cents = rng.standard_normal((12, 5))
    x = rng.standard_normal((80, 5))
    labels = assign(x, Codebook(cents))
    d = ((x[:, None, :] - cents[None]) ** 2).sum(-1)
    assert np.all(d[np.arange(80), labels] <= d.min(axis=1) + 1e-12)
