"""Noise-to-data baseline: Gaussian start, conditioned on the densified input.

The forward process is ``x_t = alpha_t x1 + sigma_t eps`` with
``alpha = 1 - cos(pi s / 2)`` on a grid ``s = k / T`` and ``sigma = 1 - alpha``,
so ``d x_t / d alpha = x1 - eps`` and the network regresses ``x1 - eps``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, NumericalError
from .flow import fm_loss


@dataclass(frozen=True)
class DiffusionSchedule:
    num_train_steps: int = 100

    def __post_init__(self):
        if int(self.num_train_steps) != self.num_train_steps or self.num_train_steps < 1:
            raise InvalidArgumentError("num_train_steps must be a positive integer")

    @staticmethod
    def alpha_of(s):
        s = np.asarray(s, dtype=np.float64)
        a = 1.0 - np.cos(s * (math.pi / 2))
        # pin the ends exactly; cos(pi/2) is not 0 in floating point
        return np.where(s >= 1.0, 1.0, np.where(s <= 0.0, 0.0, a))

    @property
    def alphas(self) -> np.ndarray:
        return self.alpha_of(np.arange(self.num_train_steps + 1) / self.num_train_steps)

    @property
    def sigmas(self) -> np.ndarray:
        return 1.0 - self.alphas


def diffuse_forward(x1_aligned, t_index: int, rng, sched: DiffusionSchedule):
    """Noisy sample at grid index ``t_index``; returns ``(x_t, eps)``."""
    if not 0 <= t_index <= sched.num_train_steps:
        raise InvalidArgumentError(f"t_index must be in [0, {sched.num_train_steps}], got {t_index}")
    x1 = np.asarray(x1_aligned, dtype=np.float64)
    eps = rng.standard_normal(x1.shape)
    a = sched.alphas[t_index]
    s = sched.sigmas[t_index]
    return a * x1 + s * eps, eps


def baseline_target(x1_aligned, eps) -> np.ndarray:
    return np.asarray(x1_aligned) - np.asarray(eps)


def baseline_loss(pred, target) -> float:
    """Mean squared error against ``x1 - eps``."""
    return fm_loss(pred, target)


def baseline_sample(net, condition, steps: int, sched: DiffusionSchedule, rng,
                    snapshots=None) -> np.ndarray:
    """Euler integration in ``alpha`` from Gaussian noise to data.

    ``net(x, alpha, condition)`` returns the predicted ``x1 - eps``; the grid
    uses ``steps`` uniform values of ``s`` mapped through the schedule.
    """
    if int(steps) != steps or steps < 1:
        raise InvalidArgumentError(f"steps must be >= 1, got {steps}")
    cond = np.asarray(condition, dtype=np.float64)
    x = rng.standard_normal(cond.shape)
    grid = sched.alpha_of(np.arange(steps + 1) / steps)
    if snapshots is not None:
        snapshots.append((0.0, x.copy()))
    for k in range(steps):
        v = np.asarray(net(x, float(grid[k]), cond))
        if v.shape != x.shape:
            raise InvalidArgumentError(f"baseline field returned shape {v.shape}, expected {x.shape}")
        x = x + (grid[k + 1] - grid[k]) * v
        if not np.all(np.isfinite(x)):
            raise NumericalError(f"baseline sampler state became non-finite at step {k}")
        if snapshots is not None:
            snapshots.append((float(grid[k + 1]), x.copy()))
    return x
