"""Training loops for the flow model and the noise-to-data baseline.

One iteration: densify each sparse patch, match the dense patch onto it,
draw a timestep, build the interpolant, regress the target, take an Adam
step. ``align=False`` skips the matching and pairs points by stored order.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import DiffusionSchedule, baseline_target
from .config import RunConfig
from .data import PatchPair
from .densify import midpoint_densify
from .errors import NumericalError
from .flow import fm_loss, fm_loss_grad, interpolate, sample_t, velocity_target
from .io import save_checkpoint
from .net import AdamState, NetParams, adam_step, backward, forward, init_params
from .transport import AssignmentCache, align, assign, cost_matrix

log = logging.getLogger(__name__)


@dataclass
class TrainResult:
    params: NetParams
    state: AdamState
    losses: list = field(default_factory=list)  # (iteration, loss, seconds)
    # weight average when enabled, else the raw weights
    ema: NetParams | None = None

    @property
    def sampling_params(self) -> NetParams:
        return self.ema if self.ema is not None else self.params


class ExampleSource:
    """Deterministic stream of ``(x0_tilde, x1_aligned)`` training pairs."""

    def __init__(self, patches: list[PatchPair], cfg: RunConfig, cache: AssignmentCache | None = None):
        self.patches = patches
        self.cfg = cfg
        self.cache = cache if cache is not None else AssignmentCache()
        self._orders: dict[int, np.ndarray] = {}

    def patch_index(self, position: int) -> tuple[int, int]:
        """Patch id and epoch for the ``position``-th example drawn."""
        n = len(self.patches)
        epoch, offset = divmod(position, n)
        order = self._orders.get(epoch)
        if order is None:
            order = np.random.default_rng([self.cfg.run.seed, 1, epoch]).permutation(n)
            self._orders = {epoch: order}
        return int(order[offset]), epoch

    def noise_key(self, epoch: int) -> int:
        k = self.cfg.densify.noise_variants
        return epoch % k if k > 0 else epoch

    def example(self, pid: int, epoch: int):
        cfg = self.cfg
        patch = self.patches[pid]
        nkey = self.noise_key(epoch)
        rng = np.random.default_rng([cfg.run.seed, 2, pid, nkey])
        x0 = midpoint_densify(patch.sparse, cfg.densify_config(), rng=rng)
        x1 = patch.dense
        if cfg.transport.align:
            key = (pid, cfg.run.seed, nkey)
            a = self.cache.get(key)
            if a is None:
                a = assign(cost_matrix(x0, x1), solver=cfg.transport.solver, epsilon=cfg.transport.epsilon)
                self.cache.put(key, a)
            x1 = align(x1, a)
        return x0, x1

    def batch(self, it: int, pool: ThreadPoolExecutor | None = None):
        b = self.cfg.optim.batch
        keys = [self.patch_index(it * b + j) for j in range(b)]
        if pool is None:
            pairs = [self.example(*k) for k in keys]
        else:
            pairs = list(pool.map(lambda k: self.example(*k), keys))
        x0 = np.stack([p[0] for p in pairs])
        x1 = np.stack([p[1] for p in pairs])
        return x0, x1


def initial_params(cfg: RunConfig) -> NetParams:
    return init_params(cfg.arch(), np.random.default_rng([cfg.run.seed, 0, cfg.net.seed]))


def checkpoint_meta(cfg: RunConfig, step: int) -> dict:
    return {"step": step, "config_hash": cfg.config_hash(), "method": cfg.run.method,
            "gamma": cfg.densify.gamma, "eta": cfg.densify.eta,
            "weights": "ema" if cfg.optim.ema > 0 else "raw"}


def learning_rate(o, it: int) -> float:
    if o.lr_schedule == "cosine" and o.iterations > 1:
        return o.lr * 0.5 * (1.0 + math.cos(math.pi * it / (o.iterations - 1)))
    return o.lr


def _update_ema(ema: NetParams, params: NetParams, decay: float) -> None:
    for k, w in params.tensors.items():
        e = ema.tensors[k]
        e *= decay
        e += (1.0 - decay) * w


def _step(params, state, cfg, x0, x1, sched, diffusion, rng_t, rng_eps) -> float:
    if cfg.run.method == "flow":
        t = sample_t(rng_t, sched, size=len(x0))
        x_in = interpolate(x0, x1, t).x_t
        target = velocity_target(x0, x1)
        pred, tape = forward(params, x_in, t)
    else:
        k = rng_t.integers(0, diffusion.num_train_steps, size=len(x0))
        eps = rng_eps.standard_normal(x1.shape)
        a = diffusion.alphas[k][:, None, None]
        x_in = a * x1 + (1.0 - a) * eps
        target = baseline_target(x1, eps)
        pred, tape = forward(params, x_in, diffusion.alphas[k], cond=x0)
    loss = fm_loss(pred, target)
    if not np.isfinite(loss):
        raise NumericalError("loss is non-finite")
    grads = backward(params, tape, fm_loss_grad(pred, target))
    adam_step(params, grads, state)
    if not all(np.all(np.isfinite(v)) for v in params.tensors.values()):
        raise NumericalError("parameters are non-finite")
    return loss


def train(patches: list[PatchPair], cfg: RunConfig, log_path=None, checkpoint_path=None,
          params: NetParams | None = None, cache: AssignmentCache | None = None,
          progress_every: int = 0, source=None, hook=None, hook_every: int = 0) -> TrainResult:
    """Run ``cfg.optim.iterations`` steps; flow or baseline per ``cfg.run.method``.

    ``source`` replaces the patch stream with any object exposing
    ``batch(it, pool) -> (x0, x1)``; ``patches`` is then ignored. ``hook(it, params)``
    runs after every ``hook_every``-th iteration (counting from 1).
    """
    cfg.validate()
    params = params if params is not None else initial_params(cfg)
    o = cfg.optim
    state = AdamState(lr=o.lr, beta1=o.beta1, beta2=o.beta2, eps=o.eps)
    if source is None:
        source = ExampleSource(patches, cfg, cache)
    sched = cfg.schedule()
    diffusion = DiffusionSchedule(cfg.run.ddpm_train_steps)
    rng_t = np.random.default_rng([cfg.run.seed, 3])
    rng_eps = np.random.default_rng([cfg.run.seed, 4])
    result = TrainResult(params, state)
    ema = params.copy() if o.ema > 0 else None
    log_fh = open(log_path, "w", encoding="ascii") if log_path else None
    pool = ThreadPoolExecutor(cfg.run.workers) if cfg.run.workers > 1 else None
    last_good = params.copy()
    start = time.perf_counter()
    try:
        for it in range(o.iterations):
            x0, x1 = source.batch(it, pool)
            state.lr = learning_rate(o, it)
            try:
                # overflow shows up as a non-finite loss or weights, checked in _step
                with np.errstate(over="ignore", invalid="ignore"):
                    loss = _step(params, state, cfg, x0, x1, sched, diffusion, rng_t, rng_eps)
            except NumericalError as exc:
                if checkpoint_path:
                    save_checkpoint(last_good, None, checkpoint_meta(cfg, it), checkpoint_path)
                raise NumericalError(f"training diverged at iteration {it}: {exc}") from exc
            if ema is not None:
                _update_ema(ema, params, o.ema)
            if checkpoint_path:
                last_good = (ema if ema is not None else params).copy()
            elapsed = time.perf_counter() - start
            result.losses.append((it, loss, elapsed))
            if log_fh:
                log_fh.write(f"{it}\t{loss!r}\t{elapsed:.3f}\n")
            if progress_every and it % progress_every == 0:
                log.info("iter %d loss %.6g (%.1fs)", it, loss, elapsed)
            if hook is not None and hook_every and (it + 1) % hook_every == 0:
                hook(it + 1, ema if ema is not None else params)
    finally:
        if log_fh:
            log_fh.close()
        if pool:
            pool.shutdown()
    result.ema = ema
    if checkpoint_path:
        save_checkpoint(result.sampling_params, state, checkpoint_meta(cfg, o.iterations), checkpoint_path)
    return result


def read_loss_log(path) -> list[tuple[int, float, float]]:
    rows = []
    for line in Path(path).read_text(encoding="ascii").splitlines():
        it, loss, sec = line.split("\t")
        rows.append((int(it), float(loss), float(sec)))
    return rows
