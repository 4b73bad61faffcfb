"""Toy distribution transfer: shape A samples flow to shape B samples.

No densification is involved (gamma 1, no noise): each training pair is an
i.i.d. sample of the source shape and one of the target shape. Three variants
share the network size and training budget: the flow with matched pairs,
the flow with pairs in arbitrary order, and the noise-to-data baseline
conditioned on the source sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import DiffusionSchedule, baseline_sample
from .config import RunConfig, parse_shape
from .data import sample_shape
from .errors import InvalidArgumentError
from .flow import ScheduleConfig, euler_sample
from .io import write_xyz
from .metrics import chamfer, nearest_sqdist
from .net import NetParams
from .pipeline import model_field
from .train import TrainResult, train
from .transport import align, assign_exact, cost_matrix

DEMOS = {
    "sphere-torus": ("sphere(radius=1.0)", "torus(major=1.0,minor=0.35)"),
    "ring-letter": ("2d-ring(inner=0.6,outer=1.0)", "2d-letter(letter=F,size=1.6)"),
}
VARIANTS = ("aligned", "unaligned", "ddpm")
SNAPSHOT_TIMES = (0.0, 0.25, 0.5, 0.75, 1.0)
STEP_LADDER = (1, 2, 3, 5, 10, 20, 50, 100)


@dataclass
class ToyConfig:
    demo: str = "sphere-torus"
    n_points: int = 256
    pool: int = 64
    iterations: int = 2000
    batch: int = 8
    lr: float = 1e-3
    seed: int = 0
    eval_draws: int = 4
    flow_steps: int = 5
    # a multiple of 4 so every snapshot time lies on the grid
    snapshot_steps: int = 20
    steps: tuple = STEP_LADDER
    ddpm_train_steps: int = 100

    def __post_init__(self):
        if self.demo not in DEMOS:
            raise InvalidArgumentError(f"unknown toy demo {self.demo!r}; have {sorted(DEMOS)}")
        if self.snapshot_steps % 4:
            raise InvalidArgumentError("snapshot_steps must be a multiple of 4")
        if self.n_points < 16 or self.pool < 1 or self.eval_draws < 1:
            raise InvalidArgumentError("n_points >= 16, pool >= 1 and eval_draws >= 1 required")


def run_config(tc: ToyConfig, variant: str) -> RunConfig:
    """The training config of one variant; only the loop-relevant fields matter."""
    if variant not in VARIANTS:
        raise InvalidArgumentError(f"unknown variant {variant!r}")
    cfg = RunConfig()
    cfg.data.dense_size = cfg.data.sparse_size = tc.n_points
    cfg.densify.gamma = 1
    cfg.densify.eta = 0.0
    cfg.optim.lr = tc.lr
    cfg.optim.batch = tc.batch
    cfg.optim.iterations = tc.iterations
    cfg.transport.align = variant != "unaligned"
    cfg.run.seed = tc.seed
    cfg.run.method = "ddpm" if variant == "ddpm" else "flow"
    cfg.run.ddpm_train_steps = tc.ddpm_train_steps
    cfg.flow.num_steps = tc.flow_steps
    return cfg.validate()


def _draw(text: str, n: int, rng) -> np.ndarray:
    # oversample=1: plain area-uniform i.i.d. samples, no FPS thinning
    return sample_shape(parse_shape(text), n, rng, oversample=1)


def training_pairs(tc: ToyConfig, aligned: bool) -> list[tuple[np.ndarray, np.ndarray]]:
    src, dst = DEMOS[tc.demo]
    rng = np.random.default_rng([tc.seed, 50])
    pairs = []
    for _ in range(tc.pool):
        x0 = _draw(src, tc.n_points, rng)
        x1 = _draw(dst, tc.n_points, rng)
        if aligned:
            x1 = align(x1, assign_exact(cost_matrix(x0, x1)))
        pairs.append((x0, x1))
    return pairs


class PoolSource:
    """Batches drawn with replacement from a fixed pool of pairs."""

    def __init__(self, pairs, batch: int, seed: int):
        self.pairs = pairs
        self.size = batch
        self.seed = seed

    def batch(self, it: int, pool=None):
        pick = np.random.default_rng([self.seed, 51, it]).integers(len(self.pairs), size=self.size)
        return (np.stack([self.pairs[i][0] for i in pick]),
                np.stack([self.pairs[i][1] for i in pick]))


def train_variant(tc: ToyConfig, variant: str, pairs=None) -> TrainResult:
    cfg = run_config(tc, variant)
    if pairs is None:
        pairs = training_pairs(tc, aligned=variant != "unaligned")
    return train([], cfg, source=PoolSource(pairs, tc.batch, tc.seed))


def eval_draws(tc: ToyConfig) -> list[tuple[np.ndarray, np.ndarray]]:
    """Held-out ``(source sample, target sample)`` pairs; fixed by the seed."""
    src, dst = DEMOS[tc.demo]
    rng = np.random.default_rng([tc.seed, 52])
    return [(_draw(src, tc.n_points, rng), _draw(dst, tc.n_points, rng)) for _ in range(tc.eval_draws)]


def sample(params: NetParams, variant: str, x0, steps: int, rng, tc: ToyConfig, snapshots=None):
    field_fn = model_field(params)
    if variant == "ddpm":
        return baseline_sample(field_fn, x0, steps, DiffusionSchedule(tc.ddpm_train_steps), rng,
                               snapshots=snapshots)
    return euler_sample(field_fn, x0, ScheduleConfig(num_steps=steps), snapshots=snapshots)


def dispersion(x, target) -> float:
    """Mean distance from each point to its nearest target point."""
    return float(np.mean(np.sqrt(nearest_sqdist(x, target))))


def mean_cd(params, variant, steps, draws, tc: ToyConfig) -> float:
    vals = []
    for k, (x0, gt) in enumerate(draws):
        rng = np.random.default_rng([tc.seed, 53, k, steps])
        vals.append(chamfer(sample(params, variant, x0, steps, rng, tc), gt))
    return float(np.mean(vals))


def steps_to_match(row: dict, target_cd: float) -> float:
    """Smallest step count whose CD is at most ``target_cd``; ``inf`` if none."""
    for steps in sorted(row):
        if row[steps] <= target_cd:
            return float(steps)
    return math.inf


@dataclass
class ToyReport:
    config: ToyConfig
    final_loss: dict = field(default_factory=dict)
    loss_curves: dict = field(default_factory=dict)
    # variant -> {steps: mean CD over the evaluation draws}
    table: dict = field(default_factory=dict)
    # variant -> [(t, cd to target, dispersion)]
    trajectory: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    @property
    def flow_cd(self) -> float:
        return self.table["aligned"][self.config.flow_steps]

    @property
    def ddpm_steps_to_match(self) -> float:
        return steps_to_match(self.table["ddpm"], self.flow_cd)

    def table_text(self) -> str:
        steps = sorted(next(iter(self.table.values())))
        lines = ["method\t" + "\t".join(str(s) for s in steps)]
        for v, row in self.table.items():
            lines.append(v + "\t" + "\t".join(f"{row[s]:.6g}" for s in steps))
        return "\n".join(lines) + "\n"

    def summary(self) -> str:
        out = [f"demo = {self.config.demo}"]
        for v in self.final_loss:
            out.append(f"final_loss.{v} = {self.final_loss[v]!r}")
        out.append(f"flow_cd_{self.config.flow_steps}_steps = {self.flow_cd!r}")
        out.append(f"ddpm_steps_to_match = {self.ddpm_steps_to_match}")
        for v, rows in self.trajectory.items():
            for t, cd, disp in rows:
                out.append(f"trajectory.{v}.t{t:.2f} = cd {cd:.6g} dispersion {disp:.6g}")
        return "\n".join(out) + "\n"


def run_toy(tc: ToyConfig, out_dir=None, variants=VARIANTS) -> ToyReport:
    """Train every variant, build the convergence table, dump trajectories."""
    report = ToyReport(tc)
    draws = eval_draws(tc)
    aligned_pairs = training_pairs(tc, aligned=True)
    for v in variants:
        res = train_variant(tc, v, pairs=None if v == "unaligned" else aligned_pairs)
        report.params[v] = res.params
        report.loss_curves[v] = [loss for _, loss, _ in res.losses]
        report.final_loss[v] = report.loss_curves[v][-1] if res.losses else math.nan
        report.table[v] = {s: mean_cd(res.params, v, s, draws, tc) for s in tc.steps}
        if v == "ddpm":
            continue
        snaps: list = []
        x0, gt = draws[0]
        sample(res.params, v, x0, tc.snapshot_steps, None, tc, snapshots=snaps)
        keep = [(t, x) for t, x in snaps if any(abs(t - s) < 1e-9 for s in SNAPSHOT_TIMES)]
        report.trajectory[v] = [(t, chamfer(x, gt), dispersion(x, gt)) for t, x in keep]
        if out_dir is not None:
            root = Path(out_dir)
            root.mkdir(parents=True, exist_ok=True)
            for t, x in keep:
                write_xyz(x, root / f"{tc.demo}_{v}_t{t:.2f}.xyz")
    if out_dir is not None:
        root = Path(out_dir)
        root.mkdir(parents=True, exist_ok=True)
        (root / f"{tc.demo}_convergence.tsv").write_text(report.table_text(), encoding="ascii")
        (root / f"{tc.demo}_report.txt").write_text(report.summary(), encoding="ascii")
    return report
