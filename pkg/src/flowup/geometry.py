"""Point cloud primitives: validation, normalization, nearest neighbours, FPS.

A point cloud is a plain ``(N, 3)`` float array; row order is meaningful once
two clouds have been paired by an assignment.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numba
import numpy as np

from .errors import DegenerateInputError, InvalidArgumentError

BRUTE_FORCE_BELOW = 64
LEAF_SIZE = 16


def as_cloud(points, dtype=np.float64) -> np.ndarray:
    """Validate and return ``points`` as a contiguous ``(N, 3)`` array."""
    arr = np.ascontiguousarray(points, dtype=dtype)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise InvalidArgumentError(f"expected an (N, 3) array, got shape {arr.shape}")
    if arr.shape[0] < 1:
        raise InvalidArgumentError("point cloud is empty")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError("point cloud contains non-finite coordinates")
    return arr


@dataclass(frozen=True)
class NormParams:
    centroid: np.ndarray
    scale: float

    def __post_init__(self):
        if not self.scale > 0:
            raise InvalidArgumentError(f"scale must be positive, got {self.scale}")

    def apply(self, points) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.centroid) / self.scale

    def invert(self, points) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) * self.scale + self.centroid


def normalize(cloud) -> tuple[np.ndarray, NormParams]:
    """Center on the centroid and scale so the farthest point has norm 1."""
    pts = as_cloud(cloud)
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    scale = float(np.sqrt((centered**2).sum(axis=1).max()))
    if scale <= np.finfo(np.float64).tiny:
        raise DegenerateInputError("all points coincide; cannot normalize")
    params = NormParams(centroid=centroid, scale=scale)
    return centered / scale, params


def denormalize(cloud, params: NormParams) -> np.ndarray:
    return params.invert(cloud)


# ---------------------------------------------------------------------------
# nearest neighbours


def _check_k(k, n):
    if not 1 <= k <= n:
        raise InvalidArgumentError(f"k must be in [1, {n}], got {k}")


def knn_brute(cloud, query, k: int) -> np.ndarray:
    """Exhaustive scan; ties on squared distance break by ascending index."""
    pts = np.asarray(cloud, dtype=np.float64)
    _check_k(k, len(pts))
    d2 = ((pts - np.asarray(query, dtype=np.float64)) ** 2).sum(axis=1)
    return np.argsort(d2, kind="stable")[:k]


class KDTree:
    """Immutable median-split k-d tree with exact k-nearest queries."""

    def __init__(self, cloud, leaf_size: int = LEAF_SIZE):
        self.points = as_cloud(cloud)
        self.leaf_size = leaf_size
        # node arrays: split dim (-1 for leaf), split value, children, index range
        self._dim = []
        self._val = []
        self._left = []
        self._right = []
        self._lo = []
        self._hi = []
        self._bbox_min = []
        self._bbox_max = []
        self.order = np.arange(len(self.points))
        self._build(0, len(self.points))

    def _new_node(self, lo, hi):
        pts = self.points[self.order[lo:hi]]
        self._dim.append(-1)
        self._val.append(0.0)
        self._left.append(-1)
        self._right.append(-1)
        self._lo.append(lo)
        self._hi.append(hi)
        self._bbox_min.append(pts.min(axis=0))
        self._bbox_max.append(pts.max(axis=0))
        return len(self._dim) - 1

    def _build(self, lo, hi):
        node = self._new_node(lo, hi)
        if hi - lo <= self.leaf_size:
            return node
        extent = self._bbox_max[node] - self._bbox_min[node]
        dim = int(np.argmax(extent))
        if extent[dim] == 0.0:
            return node
        idx = self.order[lo:hi]
        mid = (hi - lo) // 2
        part = np.argpartition(self.points[idx, dim], mid)
        self.order[lo:hi] = idx[part]
        self._dim[node] = dim
        self._val[node] = float(self.points[self.order[lo + mid], dim])
        self._left[node] = self._build(lo, lo + mid)
        self._right[node] = self._build(lo + mid, hi)
        return node

    def _box_d2(self, node, q):
        gap = np.maximum(self._bbox_min[node] - q, 0.0) + np.maximum(q - self._bbox_max[node], 0.0)
        return float(gap @ gap)

    def query(self, query, k: int) -> np.ndarray:
        _check_k(k, len(self.points))
        q = np.asarray(query, dtype=np.float64)
        # max-heap of the k best as (-d2, -index)
        best: list[tuple[float, int]] = []
        frontier = [(0.0, 0)]
        while frontier:
            bound, node = heapq.heappop(frontier)
            if len(best) == k and bound > -best[0][0]:
                break
            if self._dim[node] < 0:
                idx = self.order[self._lo[node] : self._hi[node]]
                d2 = ((self.points[idx] - q) ** 2).sum(axis=1)
                for dist, i in zip(d2.tolist(), idx.tolist()):
                    item = (-dist, -i)
                    if len(best) < k:
                        heapq.heappush(best, item)
                    elif item > best[0]:
                        heapq.heapreplace(best, item)
                continue
            for child in (self._left[node], self._right[node]):
                heapq.heappush(frontier, (self._box_d2(child, q), child))
        ranked = sorted((-d, -i) for d, i in best)
        return np.array([i for _, i in ranked], dtype=np.int64)


def knn(cloud, query, k: int, tree: KDTree | None = None) -> np.ndarray:
    """Indices of the ``k`` nearest points to ``query``, nearest first."""
    pts = np.asarray(cloud, dtype=np.float64)
    _check_k(k, len(pts))
    if tree is None and len(pts) < BRUTE_FORCE_BELOW:
        return knn_brute(pts, query, k)
    if tree is None:
        tree = KDTree(pts)
    return tree.query(query, k)


def pairwise_sqdist(a, b) -> np.ndarray:
    diff = np.asarray(a, dtype=np.float64)[:, None, :] - np.asarray(b, dtype=np.float64)[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


@numba.njit(cache=True)
def _knn_graph_kernel(pts, k, exclude_self):
    n = pts.shape[0]
    out = np.empty((n, k), dtype=np.int64)
    bd = np.empty(k)
    bi = np.empty(k, dtype=np.int64)
    for i in range(n):
        filled = 0
        for j in range(n):
            if exclude_self and j == i:
                continue
            d = 0.0
            for c in range(pts.shape[1]):
                diff = pts[j, c] - pts[i, c]
                d += diff * diff
            # j ascends, so an equal distance never displaces an earlier index
            if filled == k and d >= bd[k - 1]:
                continue
            pos = filled if filled < k else k - 1
            while pos > 0 and bd[pos - 1] > d:
                if pos < k:
                    bd[pos] = bd[pos - 1]
                    bi[pos] = bi[pos - 1]
                pos -= 1
            bd[pos] = d
            bi[pos] = j
            if filled < k:
                filled += 1
        out[i] = bi
    return out


def knn_graph(cloud, k: int, exclude_self: bool = True) -> np.ndarray:
    """Neighbour lists for every point of ``cloud``, shape ``(N, k)``.

    Same ordering rule as :func:`knn`. With ``exclude_self`` a point is never
    its own neighbour, even when duplicates exist.
    """
    pts = as_cloud(cloud)
    _check_k(k, len(pts) - 1 if exclude_self else len(pts))
    return _knn_graph_kernel(pts, int(k), bool(exclude_self))


# ---------------------------------------------------------------------------
# farthest point sampling


@numba.njit(cache=True)
def _fps_kernel(pts, m, seed):
    n = pts.shape[0]
    chosen = np.empty(m, dtype=np.int64)
    mind = np.full(n, np.inf)
    cur = seed
    for s in range(m):
        chosen[s] = cur
        # chosen points sit below every candidate so duplicates never repeat
        mind[cur] = -1.0
        best = -2.0
        best_i = -1
        for i in range(n):
            dx = pts[i, 0] - pts[cur, 0]
            dy = pts[i, 1] - pts[cur, 1]
            dz = pts[i, 2] - pts[cur, 2]
            d = dx * dx + dy * dy + dz * dz
            if d < mind[i]:
                mind[i] = d
            if mind[i] > best:
                best = mind[i]
                best_i = i
        cur = best_i
    return chosen


def fps(cloud, m: int, seed_index: int = 0) -> np.ndarray:
    """Greedy farthest point sampling; returns ``m`` distinct indices.

    Starts at ``seed_index``; ties on squared distance go to the lower index,
    so exact duplicates of chosen points are taken in index order.
    """
    pts = as_cloud(cloud)
    n = len(pts)
    if not 1 <= m <= n:
        raise InvalidArgumentError(f"m must be in [1, {n}], got {m}")
    if not 0 <= seed_index < n:
        raise InvalidArgumentError(f"seed_index {seed_index} out of range for {n} points")
    return _fps_kernel(pts, m, seed_index)
