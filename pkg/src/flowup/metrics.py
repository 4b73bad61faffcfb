"""Chamfer, Hausdorff and point-to-surface distances plus the report record.

Chamfer here is the sum of both directional means of *squared* nearest
distances; Hausdorff is the symmetric max of unsquared nearest distances.
"""

from __future__ import annotations

import csv
import io as _io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import InvalidArgumentError

DEGENERATE_AREA = 1e-14


def _cloud(x, name):
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3 or len(arr) == 0:
        raise InvalidArgumentError(f"{name} must be a non-empty (N, 3) array, got shape {arr.shape}")
    return arr


def nearest_sqdist(a, b) -> np.ndarray:
    """Squared distance from every point of ``a`` to its nearest point in ``b``."""
    d, _ = cKDTree(b).query(a, k=1)
    return d * d


def chamfer(a, b) -> float:
    a = _cloud(a, "a")
    b = _cloud(b, "b")
    return float(nearest_sqdist(a, b).mean() + nearest_sqdist(b, a).mean())


def hausdorff(a, b) -> float:
    a = _cloud(a, "a")
    b = _cloud(b, "b")
    return float(np.sqrt(max(nearest_sqdist(a, b).max(), nearest_sqdist(b, a).max())))


# ---------------------------------------------------------------------------
# meshes


@dataclass
class TriangleMesh:
    vertices: np.ndarray
    faces: np.ndarray
    dropped_faces: int = 0

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if len(self.faces) and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise InvalidArgumentError("face index out of range")

    def triangles(self) -> np.ndarray:
        """``(F, 3, 3)`` corner coordinates."""
        return self.vertices[self.faces]

    def areas(self) -> np.ndarray:
        tri = self.triangles()
        return 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)

    def without_degenerate(self) -> "TriangleMesh":
        keep = self.areas() > DEGENERATE_AREA
        return TriangleMesh(self.vertices, self.faces[keep], self.dropped_faces + int((~keep).sum()))


def closest_point_on_triangles(p, a, b, c) -> np.ndarray:
    """Closest points for paired rows of query ``p`` and triangles ``(a, b, c)``.

    Voronoi-region classification of the query against the triangle's
    vertices, edges and face, evaluated for all rows at once.
    """
    ab = b - a
    ac = c - a
    ap = p - a
    bp = p - b
    cp = p - c

    def dot(x, y):
        return np.einsum("ij,ij->i", x, y)

    d1, d2 = dot(ab, ap), dot(ac, ap)
    d3, d4 = dot(ab, bp), dot(ac, bp)
    d5, d6 = dot(ab, cp), dot(ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    out = np.empty_like(p)
    done = np.zeros(len(p), dtype=bool)

    def take(mask, value):
        sel = mask & ~done
        out[sel] = value[sel] if value.ndim == 2 else value
        done[sel] = True

    with np.errstate(divide="ignore", invalid="ignore"):
        take((d1 <= 0) & (d2 <= 0), a)
        take((d3 >= 0) & (d4 <= d3), b)
        take((d6 >= 0) & (d5 <= d6), c)
        v_ab = d1 / (d1 - d3)
        take((vc <= 0) & (d1 >= 0) & (d3 <= 0), a + v_ab[:, None] * ab)
        w_ac = d2 / (d2 - d6)
        take((vb <= 0) & (d2 >= 0) & (d6 <= 0), a + w_ac[:, None] * ac)
        w_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        take((va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0), b + w_bc[:, None] * (c - b))
        denom = 1.0 / (va + vb + vc)
        inside = a + (vb * denom)[:, None] * ab + (vc * denom)[:, None] * ac
    take(np.ones(len(p), dtype=bool), inside)
    return out


def point_triangle_sqdist(p, tri) -> np.ndarray:
    """Squared distances between query rows and triangle rows (paired)."""
    q = closest_point_on_triangles(p, tri[:, 0], tri[:, 1], tri[:, 2])
    d = p - q
    return np.einsum("ij,ij->i", d, d)


class TriangleBVH:
    """Axis-aligned bounding-box hierarchy over mesh faces."""

    def __init__(self, triangles, leaf_size: int = 8):
        self.tri = np.asarray(triangles, dtype=np.float64)
        if len(self.tri) == 0:
            raise InvalidArgumentError("cannot build a BVH over zero triangles")
        self.leaf_size = leaf_size
        self.lo_box, self.hi_box, self.children, self.ranges = [], [], [], []
        centers = self.tri.mean(axis=1)
        self.order = np.arange(len(self.tri))
        self._build(centers, 0, len(self.tri))
        self.lo_box = np.array(self.lo_box)
        self.hi_box = np.array(self.hi_box)
        self.tri_sorted = self.tri[self.order]

    def _build(self, centers, lo, hi):
        idx = self.order[lo:hi]
        pts = self.tri[idx].reshape(-1, 3)
        node = len(self.children)
        self.lo_box.append(pts.min(axis=0))
        self.hi_box.append(pts.max(axis=0))
        self.children.append(None)
        self.ranges.append((lo, hi))
        if hi - lo <= self.leaf_size:
            return node
        c = centers[idx]
        dim = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        mid = (hi - lo) // 2
        self.order[lo:hi] = idx[np.argpartition(c[:, dim], mid)]
        left = self._build(centers, lo, lo + mid)
        right = self._build(centers, lo + mid, hi)
        self.children[node] = (left, right)
        return node

    def _box_sqdist(self, node, q):
        gap = np.maximum(self.lo_box[node] - q, 0.0) + np.maximum(q - self.hi_box[node], 0.0)
        return float(gap @ gap)

    def query_sqdist(self, q) -> float:
        best = np.inf
        stack = [0]
        while stack:
            node = stack.pop()
            if self._box_sqdist(node, q) >= best:
                continue
            kids = self.children[node]
            if kids is None:
                lo, hi = self.ranges[node]
                tri = self.tri_sorted[lo:hi]
                d2 = point_triangle_sqdist(np.broadcast_to(q, (hi - lo, 3)).copy(), tri)
                best = min(best, float(d2.min()))
                continue
            # visit the nearer child first (pushed last)
            dl = self._box_sqdist(kids[0], q)
            dr = self._box_sqdist(kids[1], q)
            if dl <= dr:
                stack.extend((kids[1], kids[0]))
            else:
                stack.extend((kids[0], kids[1]))
        return best


def _usable_mesh(mesh: TriangleMesh) -> TriangleMesh:
    clean = mesh.without_degenerate()
    if len(clean.faces) == 0:
        raise InvalidArgumentError("mesh has no non-degenerate faces")
    return clean


def point_to_face_distances(points, mesh: TriangleMesh) -> np.ndarray:
    pts = _cloud(points, "points")
    bvh = TriangleBVH(_usable_mesh(mesh).triangles())
    return np.sqrt(np.array([bvh.query_sqdist(q) for q in pts]))


def point_to_face(points, mesh: TriangleMesh) -> float:
    """Mean unsigned distance from each point to the nearest mesh triangle."""
    return float(point_to_face_distances(points, mesh).mean())


def point_to_face_brute(points, mesh: TriangleMesh) -> float:
    """All-triangles scan; reference for :func:`point_to_face`."""
    pts = _cloud(points, "points")
    tri = _usable_mesh(mesh).triangles()
    f = len(tri)
    best = np.empty(len(pts))
    for i, q in enumerate(pts):
        best[i] = point_triangle_sqdist(np.repeat(q[None], f, axis=0), tri).min()
    return float(np.sqrt(best).mean())


# ---------------------------------------------------------------------------
# reports

TABLE_FIELDS = ("label", "cd", "hd", "p2f", "n_pred", "n_gt", "n_faces", "scale")


@dataclass
class EvalReport:
    cd: float
    hd: float
    p2f: float | None = None
    n_pred: int = 0
    n_gt: int = 0
    n_faces: int = 0
    scale: float = 1.0
    label: str = ""
    provenance: dict = field(default_factory=dict)

    def to_text(self) -> str:
        lines = [
            f"label={self.label}",
            f"cd={self.cd!r}",
            f"hd={self.hd!r}",
            f"p2f={'' if self.p2f is None else repr(self.p2f)}",
            f"cd_1e-4={self.cd * 1e4:.6f}",
            f"hd_1e-3={self.hd * 1e3:.6f}",
            f"p2f_1e-3={'' if self.p2f is None else f'{self.p2f * 1e3:.6f}'}",
            f"n_pred={self.n_pred}",
            f"n_gt={self.n_gt}",
            f"n_faces={self.n_faces}",
            f"scale={self.scale!r}",
        ]
        lines += [f"{k}={v}" for k, v in sorted(self.provenance.items())]
        return "\n".join(lines) + "\n"

    def table_row(self) -> dict:
        return {
            "label": self.label, "cd": repr(self.cd), "hd": repr(self.hd),
            "p2f": "" if self.p2f is None else repr(self.p2f),
            "n_pred": self.n_pred, "n_gt": self.n_gt, "n_faces": self.n_faces,
            "scale": repr(self.scale),
        }

    def append_to_table(self, path) -> None:
        """Append a tab-separated row, writing the header for a new file."""
        path = Path(path)
        new = not path.exists() or path.stat().st_size == 0
        buf = _io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=TABLE_FIELDS, delimiter="\t", lineterminator="\n")
        if new:
            writer.writeheader()
        writer.writerow(self.table_row())
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(buf.getvalue())


def unit_box_scale(gt) -> float:
    """Factor that maps the ground truth's longest bounding-box side to 1."""
    gt = _cloud(gt, "gt")
    extent = float((gt.max(axis=0) - gt.min(axis=0)).max())
    return 1.0 / extent if extent > 0 else 1.0


def evaluate(pred, gt, mesh: TriangleMesh | None = None, unit_box: bool = False,
             label: str = "", provenance: dict | None = None) -> EvalReport:
    """CD and HD always, P2F when a mesh is given.

    With ``unit_box`` every input is first scaled (about the ground-truth box
    minimum) so the ground truth fits a unit bounding box.
    """
    pred = _cloud(pred, "pred")
    gt = _cloud(gt, "gt")
    scale = 1.0
    if unit_box:
        scale = unit_box_scale(gt)
        origin = gt.min(axis=0)
        pred = (pred - origin) * scale
        gt = (gt - origin) * scale
        if mesh is not None:
            mesh = TriangleMesh((mesh.vertices - origin) * scale, mesh.faces, mesh.dropped_faces)
    p2f = None
    n_faces = 0
    if mesh is not None:
        clean = _usable_mesh(mesh)
        n_faces = len(clean.faces)
        p2f = point_to_face(pred, clean)
    return EvalReport(
        cd=chamfer(pred, gt), hd=hausdorff(pred, gt), p2f=p2f,
        n_pred=len(pred), n_gt=len(gt), n_faces=n_faces, scale=scale,
        label=label, provenance=dict(provenance or {}),
    )
