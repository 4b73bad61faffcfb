"""Synthetic surfaces, patch extraction and noise injection.

Surfaces are sampled uniformly by area, oversampled, then thinned with FPS to
get an evenly spaced (blue-noise like) set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError
from .geometry import NormParams, as_cloud, fps, normalize

SHAPE_KINDS = ("sphere", "ellipsoid", "torus", "cylinder", "plane-with-bump",
               "2d-ring", "2d-letter", "mesh-file")

DEFAULTS = {
    "sphere": {"radius": 1.0},
    "ellipsoid": {"a": 1.0, "b": 0.7, "c": 0.5},
    "torus": {"major": 1.0, "minor": 0.3},
    "cylinder": {"radius": 0.5, "height": 1.5},
    "plane-with-bump": {"extent": 1.0, "height": 0.5, "width": 0.35},
    "2d-ring": {"inner": 0.6, "outer": 1.0},
    "2d-letter": {"letter": "F", "size": 1.0},
    "mesh-file": {"path": ""},
}

# blocky glyphs as unions of axis-aligned rectangles (x0, y0, x1, y1) in a unit cell
LETTERS = {
    "F": [(0.0, 0.0, 0.25, 1.0), (0.25, 0.8, 0.9, 1.0), (0.25, 0.42, 0.7, 0.6)],
    "L": [(0.0, 0.0, 0.25, 1.0), (0.25, 0.0, 0.9, 0.2)],
    "T": [(0.0, 0.8, 1.0, 1.0), (0.375, 0.0, 0.625, 0.8)],
    "H": [(0.0, 0.0, 0.25, 1.0), (0.75, 0.0, 1.0, 1.0), (0.25, 0.4, 0.75, 0.6)],
}


@dataclass
class ShapeSpec:
    kind: str
    params: dict = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        if self.kind not in SHAPE_KINDS:
            raise InvalidArgumentError(f"unknown shape kind {self.kind!r}; expected one of {SHAPE_KINDS}")
        merged = dict(DEFAULTS[self.kind])
        merged.update(self.params)
        self.params = merged
        for k, v in merged.items():
            if isinstance(v, (int, float)) and not v > 0 and not (k == "height" and self.kind == "plane-with-bump"):
                raise InvalidArgumentError(f"shape parameter {k} must be positive, got {v}")
        if self.kind == "2d-ring" and not merged["inner"] < merged["outer"]:
            raise InvalidArgumentError("2d-ring needs inner < outer")
        if self.kind == "2d-letter" and merged["letter"] not in LETTERS:
            raise InvalidArgumentError(f"unsupported letter {merged['letter']!r}; have {sorted(LETTERS)}")
        if self.kind == "mesh-file" and not merged["path"]:
            raise InvalidArgumentError("mesh-file shape needs a path")
        if not self.name:
            self.name = self.kind

    @property
    def is_2d(self) -> bool:
        return self.kind.startswith("2d-")


@dataclass
class PatchPair:
    sparse: np.ndarray
    dense: np.ndarray
    norm: NormParams
    source: str = ""
    seed: int = 0

    @property
    def rate(self) -> int:
        return len(self.dense) // len(self.sparse)


# ---------------------------------------------------------------------------
# raw area-uniform samplers


def _unit_sphere(rng, n):
    v = rng.standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _rejection(rng, n, propose, accept_prob, batch=None):
    out = []
    have = 0
    batch = batch or max(2 * n, 1024)
    while have < n:
        cand, extra = propose(batch)
        keep = rng.random(batch) < accept_prob(cand, extra)
        out.append(cand[keep])
        have += int(keep.sum())
    return np.concatenate(out)[:n]


def _sample_raw(spec: ShapeSpec, n: int, rng) -> np.ndarray:
    p = spec.params
    k = spec.kind
    if k == "sphere":
        return p["radius"] * _unit_sphere(rng, n)
    if k == "ellipsoid":
        axes = np.array([p["a"], p["b"], p["c"]])
        fmax = max(axes[1] * axes[2], axes[0] * axes[2], axes[0] * axes[1])

        def accept(u, _):
            f = np.sqrt((u[:, 0] * axes[1] * axes[2]) ** 2 + (u[:, 1] * axes[0] * axes[2]) ** 2
                        + (u[:, 2] * axes[0] * axes[1]) ** 2)
            return f / fmax

        u = _rejection(rng, n, lambda m: (_unit_sphere(rng, m), None), accept)
        return u * axes
    if k == "torus":
        big, small = p["major"], p["minor"]

        def propose(m):
            ang = rng.random((m, 2)) * 2 * math.pi
            return ang, None

        ang = _rejection(rng, n, propose, lambda a, _: (big + small * np.cos(a[:, 1])) / (big + small))
        u, v = ang[:, 0], ang[:, 1]
        ring = big + small * np.cos(v)
        return np.stack([ring * np.cos(u), ring * np.sin(u), small * np.sin(v)], axis=1)
    if k == "cylinder":
        u = rng.random(n) * 2 * math.pi
        z = (rng.random(n) - 0.5) * p["height"]
        return np.stack([p["radius"] * np.cos(u), p["radius"] * np.sin(u), z], axis=1)
    if k == "plane-with-bump":
        ext, h, w = p["extent"], p["height"], p["width"]
        gmax = abs(h) / w * math.exp(-0.5)
        smax = math.sqrt(1 + gmax**2)

        def propose(m):
            xy = (rng.random((m, 2)) * 2 - 1) * ext
            return xy, None

        def accept(xy, _):
            r2 = (xy**2).sum(axis=1)
            g = np.abs(h) * np.sqrt(r2) / w**2 * np.exp(-r2 / (2 * w**2))
            return np.sqrt(1 + g**2) / smax

        xy = _rejection(rng, n, propose, accept)
        z = h * np.exp(-(xy**2).sum(axis=1) / (2 * w**2))
        return np.column_stack([xy, z])
    if k == "2d-ring":
        r = np.sqrt(rng.uniform(p["inner"] ** 2, p["outer"] ** 2, n))
        u = rng.random(n) * 2 * math.pi
        return np.stack([r * np.cos(u), r * np.sin(u), np.zeros(n)], axis=1)
    if k == "2d-letter":
        rects = np.array(LETTERS[p["letter"]]) * p["size"]
        areas = (rects[:, 2] - rects[:, 0]) * (rects[:, 3] - rects[:, 1])
        # union area is preserved because the glyph rectangles do not overlap
        which = rng.choice(len(rects), size=n, p=areas / areas.sum())
        r = rects[which]
        x = r[:, 0] + rng.random(n) * (r[:, 2] - r[:, 0])
        y = r[:, 1] + rng.random(n) * (r[:, 3] - r[:, 1])
        centre = p["size"] * 0.5
        return np.stack([x - centre, y - centre, np.zeros(n)], axis=1)
    if k == "mesh-file":
        from .io import read_obj

        mesh = read_obj(p["path"]).without_degenerate()
        return sample_mesh(mesh.triangles(), n, rng)
    raise InvalidArgumentError(f"unhandled kind {k!r}")


def sample_mesh(triangles, n: int, rng) -> np.ndarray:
    """Area-uniform samples on a triangle soup ``(F, 3, 3)``."""
    tri = np.asarray(triangles, dtype=np.float64)
    areas = 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
    if len(tri) == 0 or not areas.sum() > 0:
        raise InvalidArgumentError("mesh has no area to sample")
    face = rng.choice(len(tri), size=n, p=areas / areas.sum())
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    t = tri[face]
    return ((1 - r1)[:, None] * t[:, 0] + (r1 * (1 - r2))[:, None] * t[:, 1]
            + (r1 * r2)[:, None] * t[:, 2])


def surface_area(spec: ShapeSpec) -> float:
    """Analytic (or numerically integrated) area of the sampled surface."""
    p = spec.params
    k = spec.kind
    if k == "sphere":
        return 4 * math.pi * p["radius"] ** 2
    if k == "torus":
        return 4 * math.pi**2 * p["major"] * p["minor"]
    if k == "cylinder":
        return 2 * math.pi * p["radius"] * p["height"]
    if k == "2d-ring":
        return math.pi * (p["outer"] ** 2 - p["inner"] ** 2)
    if k == "2d-letter":
        rects = np.array(LETTERS[p["letter"]]) * p["size"]
        return float(((rects[:, 2] - rects[:, 0]) * (rects[:, 3] - rects[:, 1])).sum())
    if k == "ellipsoid":
        # midpoint rule over the (theta, phi) sphere parametrisation
        m = 400
        th = (np.arange(m) + 0.5) * math.pi / m
        ph = (np.arange(2 * m) + 0.5) * math.pi / m
        T, P = np.meshgrid(th, ph, indexing="ij")
        u = np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], axis=-1)
        a, b, c = p["a"], p["b"], p["c"]
        f = np.sqrt((u[..., 0] * b * c) ** 2 + (u[..., 1] * a * c) ** 2 + (u[..., 2] * a * b) ** 2)
        return float((f * np.sin(T)).sum() * (math.pi / m) ** 2)
    if k == "plane-with-bump":
        m = 1000
        ext, h, w = p["extent"], p["height"], p["width"]
        xs = -ext + (np.arange(m) + 0.5) * (2 * ext / m)
        X, Y = np.meshgrid(xs, xs, indexing="ij")
        r2 = X**2 + Y**2
        g = h * np.sqrt(r2) / w**2 * np.exp(-r2 / (2 * w**2))
        return float(np.sqrt(1 + g**2).sum() * (2 * ext / m) ** 2)
    raise InvalidArgumentError(f"no area formula for {k!r}")


def surface_residual(spec: ShapeSpec, pts) -> np.ndarray:
    """Distance-like residual of ``pts`` from the analytic surface (0 on it)."""
    p = spec.params
    x, y, z = np.asarray(pts, dtype=np.float64).T
    k = spec.kind
    if k == "sphere":
        return np.abs(np.sqrt(x * x + y * y + z * z) - p["radius"])
    if k == "ellipsoid":
        return np.abs((x / p["a"]) ** 2 + (y / p["b"]) ** 2 + (z / p["c"]) ** 2 - 1)
    if k == "torus":
        return np.abs((np.sqrt(x * x + y * y) - p["major"]) ** 2 + z * z - p["minor"] ** 2)
    if k == "cylinder":
        out = np.abs(np.sqrt(x * x + y * y) - p["radius"])
        return out + np.maximum(np.abs(z) - p["height"] / 2, 0)
    if k == "plane-with-bump":
        res = np.abs(z - p["height"] * np.exp(-(x * x + y * y) / (2 * p["width"] ** 2)))
        return res + np.maximum(np.maximum(np.abs(x), np.abs(y)) - p["extent"], 0)
    if k == "2d-ring":
        r = np.sqrt(x * x + y * y)
        return np.abs(z) + np.maximum(p["inner"] - r, 0) + np.maximum(r - p["outer"], 0)
    if k == "2d-letter":
        rects = np.array(LETTERS[p["letter"]]) * p["size"]
        c = p["size"] * 0.5
        inside = np.zeros(len(x), dtype=bool)
        for x0, y0, x1, y1 in rects:
            inside |= (x + c >= x0) & (x + c <= x1) & (y + c >= y0) & (y + c <= y1)
        return np.abs(z) + (~inside).astype(np.float64)
    raise InvalidArgumentError(f"no implicit form for {k!r}")


def sample_shape(spec: ShapeSpec, n: int, rng, oversample: int = 16) -> np.ndarray:
    """``n`` evenly spread surface points: area-uniform oversampling + FPS thinning."""
    if n < 1:
        raise InvalidArgumentError(f"n must be >= 1, got {n}")
    if oversample < 1:
        raise InvalidArgumentError(f"oversample must be >= 1, got {oversample}")
    raw = _sample_raw(spec, n * oversample, rng)
    if oversample == 1:
        return raw
    keep = fps(raw, n, seed_index=int(rng.integers(len(raw))))
    return raw[keep]


# ---------------------------------------------------------------------------
# patches


def extract_patches(dense_surface, num_patches: int, dense_size: int = 1024, sparse_size: int = 256,
                    rng=None, source: str = "", seed: int = 0) -> list[PatchPair]:
    """FPS-seeded kNN patches with a random sparse subset each.

    Both clouds of a pair are normalized with the parameters of the sparse
    subset, the only cloud available at inference time.
    """
    surf = as_cloud(dense_surface)
    if len(surf) < dense_size:
        raise InvalidArgumentError(f"surface has {len(surf)} points, need at least {dense_size}")
    if not 1 <= sparse_size <= dense_size:
        raise InvalidArgumentError("sparse_size must be in [1, dense_size]")
    if dense_size % sparse_size:
        raise InvalidArgumentError("dense_size must be an integer multiple of sparse_size")
    if num_patches < 1 or num_patches > len(surf):
        raise InvalidArgumentError(f"num_patches must be in [1, {len(surf)}]")
    if rng is None:
        rng = np.random.default_rng(seed)
    seeds = fps(surf, num_patches, seed_index=int(rng.integers(len(surf))))
    pairs = []
    for k, s in enumerate(seeds):
        d2 = ((surf - surf[s]) ** 2).sum(axis=1)
        idx = np.sort(np.argsort(d2, kind="stable")[:dense_size])
        dense = surf[idx]
        pick = np.sort(rng.choice(dense_size, size=sparse_size, replace=False))
        sparse_n, norm = normalize(dense[pick])
        pairs.append(PatchPair(sparse=sparse_n, dense=norm.apply(dense), norm=norm,
                               source=f"{source}#{k}" if source else str(k), seed=seed))
    return pairs


def patch_seeds(dense_surface, num_patches: int, rng) -> np.ndarray:
    """Seed indices used by :func:`extract_patches` for the same generator state."""
    surf = as_cloud(dense_surface)
    return fps(surf, num_patches, seed_index=int(rng.integers(len(surf))))


def add_noise(cloud, eta: float, rng) -> np.ndarray:
    if not eta >= 0:
        raise InvalidArgumentError(f"eta must be >= 0, got {eta}")
    pts = np.asarray(cloud, dtype=np.float64)
    if eta == 0:
        return pts.copy()
    return pts + eta * rng.standard_normal(pts.shape)
