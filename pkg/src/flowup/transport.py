"""Bijective point matching (EMD pre-alignment) between equal-size clouds.

Costs are unsquared Euclidean distances. Two solvers share the
:class:`Assignment` result type: an exact shortest-augmenting-path solver and
an epsilon-scaled auction that trades a bounded excess cost for speed.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numba
import numpy as np

from .errors import ConvergenceError, InvalidArgumentError
from .geometry import as_cloud

EXACT_MAX_N = 512
DEFAULT_EPSILON = 1e-3
EPSILON_SCALING = 4.0


@dataclass(frozen=True)
class Assignment:
    """``perm[i]`` is the index in the target cloud matched to source row ``i``."""

    perm: np.ndarray
    cost: float


def cost_matrix(a, b) -> np.ndarray:
    a = as_cloud(a)
    b = as_cloud(b)
    if len(a) != len(b):
        raise InvalidArgumentError(f"cardinality mismatch: {len(a)} vs {len(b)}")
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def _check_cost(cost) -> np.ndarray:
    c = np.ascontiguousarray(cost, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] < 1:
        raise InvalidArgumentError(f"cost matrix must be square and non-empty, got {c.shape}")
    if not np.all(np.isfinite(c)):
        raise InvalidArgumentError("cost matrix has non-finite entries")
    return c


def _total(cost, perm) -> float:
    return float(cost[np.arange(len(perm)), perm].sum())


# ---------------------------------------------------------------------------
# exact solver: successive shortest augmenting paths with dual potentials


@numba.njit(cache=True, nogil=True)
def _lsap_kernel(cost):
    n = cost.shape[0]
    u = np.zeros(n)
    v = np.zeros(n)
    spc = np.empty(n)
    path = np.full(n, -1, dtype=np.int64)
    col4row = np.full(n, -1, dtype=np.int64)
    row4col = np.full(n, -1, dtype=np.int64)
    sr = np.zeros(n, dtype=np.bool_)
    sc = np.zeros(n, dtype=np.bool_)
    remaining = np.empty(n, dtype=np.int64)

    for cur in range(n):
        # Dijkstra over reduced costs from row `cur` to the nearest free column
        for it in range(n):
            remaining[it] = n - it - 1
        sr[:] = False
        sc[:] = False
        spc[:] = np.inf
        num_remaining = n
        min_val = 0.0
        i = cur
        sink = -1
        while sink == -1:
            index = -1
            lowest = np.inf
            sr[i] = True
            for it in range(num_remaining):
                j = remaining[it]
                r = min_val + cost[i, j] - u[i] - v[j]
                if r < spc[j]:
                    path[j] = i
                    spc[j] = r
                if spc[j] < lowest or (spc[j] == lowest and row4col[j] == -1):
                    lowest = spc[j]
                    index = it
            min_val = lowest
            if index == -1 or min_val == np.inf:
                return col4row, False
            j = remaining[index]
            if row4col[j] == -1:
                sink = j
            else:
                i = row4col[j]
            sc[j] = True
            num_remaining -= 1
            remaining[index] = remaining[num_remaining]

        u[cur] += min_val
        for r_ in range(n):
            if sr[r_] and r_ != cur:
                u[r_] += min_val - spc[col4row[r_]]
        for c_ in range(n):
            if sc[c_]:
                v[c_] -= min_val - spc[c_]

        j = sink
        while True:
            i = path[j]
            row4col[j] = i
            nxt = col4row[i]
            col4row[i] = j
            j = nxt
            if i == cur:
                break
    return col4row, True


def assign_exact(cost) -> Assignment:
    """Minimum-cost perfect matching, O(N^3)."""
    c = _check_cost(cost)
    perm, ok = _lsap_kernel(c)
    if not ok:
        raise ConvergenceError("no feasible assignment found")
    return Assignment(perm=perm, cost=_total(c, perm))


# ---------------------------------------------------------------------------
# auction solver


@numba.njit(cache=True, nogil=True)
def _auction_kernel(benefit, eps_final, eps_start, scaling, max_bids):
    n = benefit.shape[0]
    prices = np.zeros(n)
    owner = np.full(n, -1, dtype=np.int64)
    assigned = np.full(n, -1, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    bids = 0
    eps = eps_start
    while True:
        owner[:] = -1
        assigned[:] = -1
        for i in range(n):
            queue[i] = i
        head = 0
        count = n
        while count > 0:
            person = queue[head]
            head = (head + 1) % n
            count -= 1
            best = -np.inf
            second = -np.inf
            best_j = -1
            for j in range(n):
                val = benefit[person, j] - prices[j]
                if val > best:
                    second = best
                    best = val
                    best_j = j
                elif val > second:
                    second = val
            if n == 1:
                second = best
            prices[best_j] += best - second + eps
            prev = owner[best_j]
            owner[best_j] = person
            assigned[person] = best_j
            if prev != -1:
                assigned[prev] = -1
                queue[(head + count) % n] = prev
                count += 1
            bids += 1
            if bids > max_bids:
                return assigned, False
        if eps <= eps_final:
            break
        eps = max(eps / scaling, eps_final)
    return assigned, True


def assign_auction(cost, epsilon: float = DEFAULT_EPSILON, scaling: float = EPSILON_SCALING,
                   max_bids: int | None = None) -> Assignment:
    """Auction assignment with epsilon scaling.

    The result costs at most ``N * epsilon`` more than the optimum.
    """
    c = _check_cost(cost)
    if not epsilon > 0:
        raise InvalidArgumentError(f"epsilon must be positive, got {epsilon}")
    n = len(c)
    if max_bids is None:
        max_bids = 64 * n * n + 10_000
    spread = float(c.max() - c.min())
    eps_start = max(spread / scaling, epsilon)
    perm, ok = _auction_kernel(-c, float(epsilon), eps_start, float(scaling), int(max_bids))
    if not ok:
        raise ConvergenceError(f"auction exceeded {max_bids} bids without completing")
    return Assignment(perm=perm, cost=_total(c, perm))


def assign(cost, solver: str = "auto", epsilon: float = DEFAULT_EPSILON) -> Assignment:
    """Dispatch to a solver; ``auto`` uses the exact one up to ``EXACT_MAX_N``."""
    if solver == "auto":
        solver = "exact" if len(cost) <= EXACT_MAX_N else "auction"
    if solver == "exact":
        return assign_exact(cost)
    if solver == "auction":
        return assign_auction(cost, epsilon)
    raise InvalidArgumentError(f"unknown solver {solver!r}")


def align(dense, a: Assignment) -> np.ndarray:
    """Reorder ``dense`` so row ``i`` is the point matched to source row ``i``."""
    pts = np.asarray(dense)
    if len(pts) != len(a.perm):
        raise InvalidArgumentError(f"length mismatch: {len(pts)} points, {len(a.perm)} in assignment")
    return pts[a.perm]


def emd_align(source, dense, solver: str = "auto", epsilon: float = DEFAULT_EPSILON):
    """Match ``dense`` onto ``source`` and return ``(aligned_dense, assignment)``."""
    a = assign(cost_matrix(source, dense), solver=solver, epsilon=epsilon)
    return align(dense, a), a


class AssignmentCache:
    """Thread-safe memo of assignments keyed by (patch id, densify seed, epoch)."""

    def __init__(self):
        self._data: dict = {}
        self._lock = threading.Lock()

    def get(self, key):
        with self._lock:
            return self._data.get(key)

    def put(self, key, value: Assignment):
        with self._lock:
            self._data[key] = value

    def __len__(self):
        with self._lock:
            return len(self._data)
