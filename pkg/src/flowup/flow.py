"""Straight-path flow matching: timestep law, interpolant, target, loss, sampler."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidArgumentError, NumericalError

T_LAWS = ("cosine", "uniform")
SAMPLER_MODES = ("euler", "literal")

# (points, t) -> per-point velocity; points may carry a leading batch axis
VelocityField = Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class ScheduleConfig:
    t_law: str = "cosine"
    num_steps: int = 5
    sampler_mode: str = "euler"

    def __post_init__(self):
        if self.t_law not in T_LAWS:
            raise InvalidArgumentError(f"t_law must be one of {T_LAWS}, got {self.t_law!r}")
        if self.sampler_mode not in SAMPLER_MODES:
            raise InvalidArgumentError(f"sampler_mode must be one of {SAMPLER_MODES}")
        if int(self.num_steps) != self.num_steps or self.num_steps < 1:
            raise InvalidArgumentError(f"num_steps must be >= 1, got {self.num_steps}")


@dataclass(frozen=True)
class FlowState:
    x_t: np.ndarray
    t: float
    x0_tilde: np.ndarray
    x1_aligned: np.ndarray


def alpha(t):
    """Weight of the data endpoint on the straight path."""
    return t


def sigma(t):
    """Weight of the source endpoint on the straight path."""
    return 1.0 - t


def cosine_t(s):
    """Map uniform ``s`` to ``t = 1 - cos(s * pi / 2)``; dense near ``t = 0``."""
    return 1.0 - np.cos(np.asarray(s, dtype=np.float64) * (math.pi / 2))


def cosine_t_cdf(t):
    """CDF of the cosine law: P(T <= t) = (2/pi) arccos(1 - t)."""
    return (2.0 / math.pi) * np.arccos(1.0 - np.clip(t, 0.0, 1.0))


def sample_t(rng: np.random.Generator, cfg: ScheduleConfig, size=None):
    s = rng.random(size)
    if cfg.t_law == "uniform":
        return s
    t = cosine_t(s)
    return float(t) if size is None else t


def _pair(x0_tilde, x1_aligned):
    a = np.asarray(x0_tilde)
    b = np.asarray(x1_aligned)
    if a.shape != b.shape:
        raise InvalidArgumentError(f"endpoint shapes differ: {a.shape} vs {b.shape}")
    return a, b


def interpolate(x0_tilde, x1_aligned, t) -> FlowState:
    """Point on the straight path; ``t`` may be a scalar or one value per batch item."""
    a, b = _pair(x0_tilde, x1_aligned)
    tt = np.asarray(t, dtype=a.dtype if a.dtype.kind == "f" else np.float64)
    if np.any(tt < 0) or np.any(tt > 1):
        raise InvalidArgumentError(f"t must lie in [0, 1], got {t}")
    w = tt.reshape(tt.shape + (1,) * (a.ndim - tt.ndim))
    # written as a + t * (b - a) so that t == 0 returns the source bit for bit
    x_t = a + w * (b - a)
    return FlowState(x_t=x_t, t=t, x0_tilde=a, x1_aligned=b)


def velocity_target(x0_tilde, x1_aligned) -> np.ndarray:
    a, b = _pair(x0_tilde, x1_aligned)
    return b - a


def fm_loss(pred, target) -> float:
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise InvalidArgumentError(f"shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred - target
    return float(np.mean(diff * diff))


def fm_loss_grad(pred, target) -> np.ndarray:
    """Gradient of :func:`fm_loss` with respect to ``pred``."""
    diff = np.asarray(pred) - np.asarray(target)
    return (2.0 / diff.size) * diff


def _checked(v, shape):
    v = np.asarray(v)
    if v.shape != shape:
        raise InvalidArgumentError(f"velocity field returned shape {v.shape}, expected {shape}")
    if not np.all(np.isfinite(v)):
        raise NumericalError("velocity field returned non-finite values")
    return v


def time_grid(num_steps: int) -> np.ndarray:
    return np.arange(num_steps + 1, dtype=np.float64) / num_steps


def euler_sample(net: VelocityField, x0_tilde, cfg: ScheduleConfig, snapshots=None) -> np.ndarray:
    """Integrate the learned field from ``t = 0`` to ``t = 1``.

    ``euler``: ``x <- x + dt * v(x, t_k)`` on the uniform grid. ``literal``:
    ``x <- (1 - dt/t') x + (dt/t') v(x, t_k)`` with ``t' = t_k + dt``, which
    treats the network output as a prediction of the endpoint.

    If ``snapshots`` is a list, ``(t, x)`` pairs are appended for every grid
    time including both ends.
    """
    x = np.array(x0_tilde, copy=True)
    n = cfg.num_steps
    dt = 1.0 / n
    grid = time_grid(n)
    if snapshots is not None:
        snapshots.append((0.0, x.copy()))
    for k in range(n):
        t = float(grid[k])
        v = _checked(net(x, t), x.shape)
        if cfg.sampler_mode == "euler":
            x = x + dt * v
        else:
            w = dt / (t + dt)
            x = (1.0 - w) * x + w * v
        if not np.all(np.isfinite(x)):
            raise NumericalError(f"sampler state became non-finite at step {k}")
        if snapshots is not None:
            snapshots.append((float(grid[k + 1]), x.copy()))
    return x
