import numpy as np
import pytest
from scipy.spatial import cKDTree
from hypothesis import given, settings
from hypothesis import strategies as st

from flowup.config import parse_shape
from flowup.data import (SHAPE_KINDS, add_noise, extract_patches, patch_seeds, sample_mesh, sample_shape,
                         surface_area, surface_residual)
from flowup.errors import InvalidArgumentError
from flowup.geometry import normalize
from flowup.metrics import nearest_sqdist

ANALYTIC = ["sphere(radius=1.3)", "ellipsoid(a=1.0,b=0.7,c=0.5)", "torus(major=1.0,minor=0.3)",
            "cylinder(radius=0.5,height=1.5)", "plane-with-bump(extent=1.0,height=0.5,width=0.35)",
            "2d-ring(inner=0.6,outer=1.0)", "2d-letter(letter=F,size=1.6)"]


@pytest.mark.parametrize("text", ANALYTIC)
def test_samples_lie_on_surface(text, rng):
    spec = parse_shape(text)
    pts = sample_shape(spec, 500, rng, oversample=4)
    assert pts.shape == (500, 3)
    assert surface_residual(spec, pts).max() < 1e-9


def test_every_kind_is_covered():
    assert {parse_shape(t).kind for t in ANALYTIC} | {"mesh-file"} == set(SHAPE_KINDS)


@pytest.mark.parametrize("text, area", [
    ("sphere(radius=2.0)", 16 * np.pi),
    ("torus(major=1.0,minor=0.25)", np.pi**2),
    ("cylinder(radius=0.5,height=2.0)", 2 * np.pi),
    ("2d-ring(inner=1.0,outer=2.0)", 3 * np.pi),
    ("plane-with-bump(extent=1.0,height=0.0,width=0.3)", 4.0),
])
def test_closed_form_areas(text, area):
    assert surface_area(parse_shape(text)) == pytest.approx(area, rel=1e-5)


def test_ellipsoid_area_reduces_to_sphere():
    assert surface_area(parse_shape("ellipsoid(a=0.7,b=0.7,c=0.7)")) == pytest.approx(4 * np.pi * 0.49, rel=1e-5)


def _octant_fraction(pts):
    return np.mean((pts[:, 0] > 0) & (pts[:, 1] > 0) & (pts[:, 2] > 0))


def test_sphere_octant_fraction(rng):
    pts = sample_shape(parse_shape("sphere"), 40000, rng, oversample=1)
    assert _octant_fraction(pts) == pytest.approx(1 / 8, abs=0.01)


def test_torus_area_uniform(rng):
    # outer half of the tube (cos v > 0) carries (pi R + 2 r) / (2 pi R) of the area
    big, small = 1.0, 0.4
    pts = sample_shape(parse_shape(f"torus(major={big},minor={small})"), 40000, rng, oversample=1)
    outer = np.mean(np.hypot(pts[:, 0], pts[:, 1]) > big)
    assert outer == pytest.approx((np.pi * big + 2 * small) / (2 * np.pi * big), abs=0.01)


def test_ellipsoid_area_uniform(rng):
    # fraction of points with |z| < c/2 against a fine numerical integral of the area
    spec = parse_shape("ellipsoid(a=1.0,b=0.7,c=0.4)")
    pts = sample_shape(spec, 40000, rng, oversample=1)
    dense = sample_mesh(_ellipsoid_mesh(1.0, 0.7, 0.4), 200000, np.random.default_rng(2))
    expect = np.mean(np.abs(dense[:, 2]) < 0.2)
    assert np.mean(np.abs(pts[:, 2]) < 0.2) == pytest.approx(expect, abs=0.01)


def _ellipsoid_mesh(a, b, c, m=120):
    th = np.linspace(0, np.pi, m + 1)
    ph = np.linspace(0, 2 * np.pi, 2 * m + 1)
    T, P = np.meshgrid(th, ph, indexing="ij")
    v = np.stack([a * np.sin(T) * np.cos(P), b * np.sin(T) * np.sin(P), c * np.cos(T)], axis=-1)
    q = np.stack([v[:-1, :-1], v[1:, :-1], v[1:, 1:], v[:-1, 1:]], axis=2)
    tris = np.concatenate([q[:, :, [0, 1, 2]], q[:, :, [0, 2, 3]]]).reshape(-1, 3, 3)
    return tris


def test_fps_thinning_spreads_points(rng):
    spec = parse_shape("sphere")
    even = sample_shape(spec, 400, rng, oversample=8)
    raw = sample_shape(spec, 400, np.random.default_rng(7), oversample=1)
    def gap(p):
        return cKDTree(p).query(p, k=2)[0][:, 1].min()

    assert gap(even) > 3 * gap(raw)


def test_letter_is_planar_and_inside(rng):
    spec = parse_shape("2d-letter(letter=H,size=2.0)")
    pts = sample_shape(spec, 300, rng, oversample=2)
    assert np.all(pts[:, 2] == 0)
    assert np.abs(pts[:, :2]).max() <= 1.0


def test_mesh_sampling_stays_on_triangles(rng):
    tri = np.array([[[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 0, 1], [1, 0, 1], [0, 1, 1]]], dtype=float)
    pts = sample_mesh(tri, 2000, rng)
    assert np.all(pts[:, 0] + pts[:, 1] <= 1 + 1e-12) and np.all(pts[:, :2] >= 0)
    assert np.allclose(np.minimum(pts[:, 2], 1 - pts[:, 2]), 0)
    assert 0.4 < np.mean(pts[:, 2] > 0.5) < 0.6


def test_mesh_file_shape(tmp_path, rng):
    (tmp_path / "t.obj").write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
    pts = sample_shape(parse_shape(f"mesh-file(path={tmp_path / 't.obj'})"), 50, rng, oversample=2)
    assert np.all(pts[:, 2] == 0)


def test_degenerate_mesh_rejected(rng):
    with pytest.raises(InvalidArgumentError):
        sample_mesh(np.zeros((3, 3, 3)), 10, rng)


@settings(max_examples=15)
@given(st.integers(0, 2**32 - 1), st.sampled_from([(64, 16), (128, 32), (256, 64)]))
def test_patch_invariants(seed, sizes):
    dense_size, sparse_size = sizes
    rng = np.random.default_rng(seed)
    surf = sample_shape(parse_shape("torus"), 1024, rng, oversample=2)
    pairs = extract_patches(surf, 6, dense_size, sparse_size, rng=rng, source="t", seed=seed)
    assert len(pairs) == 6
    for p in pairs:
        assert p.sparse.shape == (sparse_size, 3) and p.dense.shape == (dense_size, 3)
        assert p.rate == dense_size // sparse_size
        # sparse is a subset of dense, and normalization used the sparse cloud
        assert np.allclose(nearest_sqdist(p.sparse, p.dense), 0)
        again, _ = normalize(p.norm.invert(p.sparse))
        np.testing.assert_allclose(again, p.sparse, atol=1e-12)
        assert np.abs(p.sparse.mean(axis=0)).max() < 1e-12
        assert np.linalg.norm(p.sparse, axis=1).max() == pytest.approx(1.0)


def test_patch_seed_helper_matches(rng):
    surf = sample_shape(parse_shape("sphere"), 600, rng, oversample=2)
    seeds = patch_seeds(surf, 5, np.random.default_rng(3))
    pairs = extract_patches(surf, 5, 128, 32, rng=np.random.default_rng(3))
    for s, p in zip(seeds, pairs):
        assert np.allclose(nearest_sqdist(p.norm.apply(surf[s][None]), p.dense), 0)


def test_patches_are_reproducible():
    surf = sample_shape(parse_shape("sphere"), 600, np.random.default_rng(0), oversample=2)
    a = extract_patches(surf, 4, 128, 32, seed=9)
    b = extract_patches(surf, 4, 128, 32, seed=9)
    for p, q in zip(a, b):
        np.testing.assert_array_equal(p.sparse, q.sparse)
        np.testing.assert_array_equal(p.dense, q.dense)


@pytest.mark.parametrize("kw", [dict(dense_size=2000), dict(sparse_size=300), dict(sparse_size=100),
                                dict(num_patches=0)])
def test_patch_argument_checks(kw, rng):
    surf = rng.normal(size=(1024, 3))
    args = dict(num_patches=2, dense_size=256, sparse_size=64) | kw
    with pytest.raises(InvalidArgumentError):
        extract_patches(surf, rng=rng, **args)


def test_noise(rng):
    pts = rng.normal(size=(20000, 3))
    np.testing.assert_array_equal(add_noise(pts, 0.0, rng), pts)
    noisy = add_noise(pts, 0.01, rng)
    assert (noisy - pts).std() == pytest.approx(0.01, rel=0.02)
    with pytest.raises(InvalidArgumentError):
        add_noise(pts, -1.0, rng)


def test_bad_sample_counts(rng):
    with pytest.raises(InvalidArgumentError):
        sample_shape(parse_shape("sphere"), 0, rng)
    with pytest.raises(InvalidArgumentError):
        sample_shape(parse_shape("sphere"), 5, rng, oversample=0)
