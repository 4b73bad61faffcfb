"""Midpoint densification of a sparse cloud (M points -> gamma * M points)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .geometry import as_cloud, knn_graph


@dataclass(frozen=True)
class DensifyConfig:
    gamma: int = 4
    eta: float = 0.01
    rng_seed: int = 0

    def __post_init__(self):
        if int(self.gamma) != self.gamma or self.gamma < 1:
            raise InvalidArgumentError(f"gamma must be a positive integer, got {self.gamma}")
        if not self.eta >= 0:
            raise InvalidArgumentError(f"eta must be >= 0, got {self.eta}")


def densify_rng(cfg: DensifyConfig, stream: int | None = None) -> np.random.Generator:
    """Generator for one densification call; ``stream`` separates patches."""
    key = [cfg.rng_seed] if stream is None else [cfg.rng_seed, stream]
    return np.random.default_rng(key)


def midpoint_layout(sparse, gamma: int) -> np.ndarray:
    """Noise-free densified cloud in replica-major order.

    Row ``j * M + i`` is the midpoint of point ``i`` and its ``j``-th nearest
    neighbour (self excluded); replica 0 is the input itself.
    """
    pts = as_cloud(sparse)
    m = len(pts)
    if m < gamma:
        raise InvalidArgumentError(f"need at least gamma={gamma} points, got {m}")
    blocks = [pts]
    if gamma > 1:
        nbrs = knn_graph(pts, gamma - 1, exclude_self=True)
        for j in range(gamma - 1):
            blocks.append(0.5 * (pts + pts[nbrs[:, j]]))
    return np.concatenate(blocks, axis=0)


def midpoint_densify(sparse, cfg: DensifyConfig, stream: int | None = None, rng=None) -> np.ndarray:
    out = midpoint_layout(sparse, cfg.gamma)
    if cfg.eta > 0:
        if rng is None:
            rng = densify_rng(cfg, stream)
        out = out + cfg.eta * rng.standard_normal(out.shape)
    return out
