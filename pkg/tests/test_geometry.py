import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from flowup.errors import DegenerateInputError, InvalidArgumentError
from flowup.geometry import (NormParams, KDTree, as_cloud, denormalize, fps, knn, knn_brute,
                             knn_graph, normalize, pairwise_sqdist)

from strategies import clouds, seeded_clouds


def fps_reference(pts, m, seed):
    """Quadratic FPS straight from the definition."""
    chosen = [seed]
    while len(chosen) < m:
        best, best_d = -1, -1.0
        for i in range(len(pts)):
            if i in chosen:
                continue
            d = min(((pts[i] - pts[j]) ** 2).sum() for j in chosen)
            if d > best_d:
                best, best_d = i, d
        chosen.append(best)
    return np.array(chosen)


def scan(pts, q, k):
    d = [(((p - q) ** 2).sum(), i) for i, p in enumerate(pts)]
    return [i for _, i in sorted(d)[:k]]


# normalize


def test_normalize_two_points():
    pts, norm = normalize([[1, 1, 1], [3, 1, 1]])
    np.testing.assert_array_equal(pts, [[-1, 0, 0], [1, 0, 0]])
    np.testing.assert_array_equal(norm.centroid, [2, 1, 1])
    assert norm.scale == 1.0


def test_normalize_identity_case():
    c = np.array([[1.0, 0, 0], [-1.0, 0, 0], [0, 0.5, 0], [0, -0.5, 0]])
    pts, norm = normalize(c)
    np.testing.assert_array_equal(pts, c)
    np.testing.assert_array_equal(norm.centroid, 0)
    assert norm.scale == 1.0


def test_normalize_random_postconditions(rng):
    c = rng.normal(size=(64, 3)) * 3 + 7
    pts, norm = normalize(c)
    assert np.abs(pts.mean(axis=0)).max() < 1e-6
    assert abs(np.linalg.norm(pts, axis=1).max() - 1) < 1e-6
    np.testing.assert_allclose(denormalize(pts, norm), c, atol=1e-6)


def test_normalize_degenerate():
    with pytest.raises(DegenerateInputError):
        normalize([[2, 2, 2]] * 5)


@pytest.mark.parametrize("bad", [np.zeros((0, 3)), np.zeros((3, 2)), [[0, np.nan, 0]], [[np.inf, 0, 0]]])
def test_as_cloud_rejects(bad):
    with pytest.raises(InvalidArgumentError):
        as_cloud(bad)


def test_normparams_rejects_nonpositive_scale():
    with pytest.raises(InvalidArgumentError):
        NormParams(np.zeros(3), 0.0)


@given(clouds(2, 30))
def test_normalize_roundtrip(c):
    if np.ptp(c, axis=0).max() < 1e-3:
        return
    pts, norm = normalize(c)
    np.testing.assert_allclose(norm.invert(pts), c, atol=1e-6 * max(1.0, np.abs(c).max()))
    np.testing.assert_allclose(norm.apply(c), pts, atol=1e-9)


# knn


def test_knn_collinear():
    cloud = [[0, 0, 0], [1, 0, 0], [2, 0, 0]]
    assert list(knn(cloud, [0.1, 0, 0], 2)) == [0, 1]


def test_knn_coincident():
    cloud = np.random.default_rng(0).normal(size=(20, 3))
    assert list(knn(cloud, cloud[7], 1)) == [7]


def test_knn_random_matches_scan(rng):
    pts = rng.random((100, 3))
    q = rng.random(3)
    assert list(knn(pts, q, 5)) == scan(pts, q, 5)


def test_knn_ties_by_index():
    pts = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [5, 5, 5]], dtype=float)
    assert list(knn(pts, [0, 0, 0], 3)) == [0, 1, 2]
    big = np.tile(pts, (30, 1))
    assert list(knn(big, [0, 0, 0], 4)) == [0, 1, 2, 3]


def test_knn_k_too_large():
    with pytest.raises(InvalidArgumentError):
        knn(np.zeros((3, 3)) + np.arange(3)[:, None], [0, 0, 0], 4)


@given(seeded_clouds(1, 1000), st.integers(0, 2**31), st.data())
def test_knn_equals_brute_force(pts, qseed, data):
    k = data.draw(st.integers(1, len(pts)))
    q = np.random.default_rng(qseed).normal(size=3)
    assert np.array_equal(knn(pts, q, k), knn_brute(pts, q, k))


def test_kdtree_queries_with_duplicates(rng):
    pts = np.round(rng.random((500, 3)) * 4) / 4  # many exact ties
    tree = KDTree(pts)
    for _ in range(30):
        q = np.round(rng.random(3) * 4) / 4
        k = int(rng.integers(1, 40))
        assert list(tree.query(q, k)) == scan(pts, q, k)


def test_knn_graph_matches_sort(rng):
    pts = rng.normal(size=(150, 3))
    pts[3] = pts[4]
    d = pairwise_sqdist(pts, pts)
    np.fill_diagonal(d, np.inf)
    np.testing.assert_array_equal(knn_graph(pts, 7), np.argsort(d, axis=1, kind="stable")[:, :7])
    assert not np.any(knn_graph(pts, 7) == np.arange(150)[:, None])


# fps


def test_fps_picks_farthest_second():
    assert list(fps([[0, 0, 0], [1, 0, 0], [10, 0, 0]], 2, seed_index=0)) == [0, 2]


def test_fps_full_is_permutation(rng):
    pts = rng.normal(size=(40, 3))
    assert sorted(fps(pts, 40)) == list(range(40))


def test_fps_matches_reference(rng):
    pts = rng.random((128, 3))
    np.testing.assert_array_equal(fps(pts, 32, seed_index=5), fps_reference(pts, 32, 5))


def test_fps_ties_lowest_index():
    pts = np.array([[0, 0, 0], [1, 0, 0], [-1, 0, 0], [0, 1, 0]], dtype=float)
    assert list(fps(pts, 3, seed_index=0)) == [0, 1, 2]


def test_fps_with_duplicates_stays_distinct():
    pts = np.zeros((10, 3))
    pts[5:] = 1.0
    out = fps(pts, 10)
    assert len(set(out.tolist())) == 10


@pytest.mark.parametrize("m,seed", [(0, 0), (11, 0), (3, 10), (3, -1)])
def test_fps_range_errors(m, seed):
    with pytest.raises(InvalidArgumentError):
        fps(np.random.default_rng(0).normal(size=(10, 3)), m, seed_index=seed)


@given(seeded_clouds(2, 120), st.data())
def test_fps_properties(pts, data):
    m = data.draw(st.integers(1, len(pts)))
    seed = data.draw(st.integers(0, len(pts) - 1))
    out = fps(pts, m, seed_index=seed)
    assert out[0] == seed and len(out) == m and len(set(out.tolist())) == m
    assert np.array_equal(out, fps_reference(pts, m, seed))


def _min_pair(p):
    d = pairwise_sqdist(p, p)
    np.fill_diagonal(d, np.inf)
    return d.min()


def test_fps_spreads_better_than_random():
    wins = 0
    for trial in range(100):
        r = np.random.default_rng(trial)
        pts = r.random((256, 3))
        sub = pts[fps(pts, 64)]
        rnd = pts[r.choice(256, 64, replace=False)]
        assert _min_pair(sub) > 0
        wins += _min_pair(sub) >= _min_pair(rnd)
    assert wins >= 95
