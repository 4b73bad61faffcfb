"""Dataset assembly, whole-shape upsampling and held-out evaluation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .baselines import DiffusionSchedule, baseline_sample
from .config import RunConfig, parse_shape
from .data import PatchPair, add_noise, extract_patches, sample_shape
from .densify import DensifyConfig, midpoint_densify
from .errors import InvalidArgumentError
from .flow import ScheduleConfig, euler_sample
from .geometry import NormParams, as_cloud, fps, normalize
from .io import read_xyz, write_xyz
from .metrics import chamfer
from .net import NetParams, as_field, forward

PATCH_OVERLAP = 2.0


# ---------------------------------------------------------------------------
# datasets


def shape_rng(cfg: RunConfig, group: int, index: int) -> np.random.Generator:
    return np.random.default_rng([cfg.run.seed, 10 + group, index])


def build_patches(cfg: RunConfig) -> list[PatchPair]:
    """Training patches for every configured training shape."""
    d = cfg.data
    out = []
    for i, text in enumerate(d.train_shapes):
        spec = parse_shape(text)
        rng = shape_rng(cfg, 0, i)
        surface = sample_shape(spec, d.surface_points, rng, oversample=d.oversample)
        out += extract_patches(surface, d.patches_per_shape, d.dense_size, d.sparse_size,
                               rng=rng, source=f"shape{i}", seed=cfg.run.seed)
    return out


def write_patches(patches: list[PatchPair], out_dir, shapes=()) -> Path:
    """One sparse and one dense XYZ per patch plus ``manifest.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for k, p in enumerate(patches):
        sparse_name = f"patch_{k:04d}_sparse.xyz"
        dense_name = f"patch_{k:04d}_dense.xyz"
        write_xyz(p.sparse, out / sparse_name)
        write_xyz(p.dense, out / dense_name)
        entries.append({
            "id": k, "source": p.source, "seed": p.seed,
            "sparse": sparse_name, "dense": dense_name,
            "sparse_points": len(p.sparse), "dense_points": len(p.dense),
            "centroid": [repr(float(c)) for c in p.norm.centroid], "scale": repr(p.norm.scale),
        })
    manifest = {"format": 1, "shapes": list(shapes), "patches": entries}
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_patches(out_dir) -> list[PatchPair]:
    root = Path(out_dir)
    try:
        manifest = json.loads((root / "manifest.json").read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise InvalidArgumentError(f"cannot read dataset manifest in {root}: {exc}") from None
    patches = []
    for e in manifest["patches"]:
        norm = NormParams(np.array([float(c) for c in e["centroid"]]), float(e["scale"]))
        patches.append(PatchPair(read_xyz(root / e["sparse"]), read_xyz(root / e["dense"]), norm,
                                 source=e["source"], seed=e["seed"]))
    return patches


@dataclass
class HeldOut:
    name: str
    gt: np.ndarray
    sparse: np.ndarray


def held_out_shapes(cfg: RunConfig, which=None) -> list[HeldOut]:
    """Ground-truth surfaces and random sparse subsets of the evaluation shapes."""
    d = cfg.data
    out = []
    for i, text in enumerate(d.eval_shapes):
        if which is not None and i not in which:
            continue
        rng = shape_rng(cfg, 1, i)
        gt, _ = normalize(sample_shape(parse_shape(text), d.surface_points, rng, oversample=d.oversample))
        pick = np.sort(rng.choice(len(gt), size=len(gt) // d.rate, replace=False))
        out.append(HeldOut(text, gt, gt[pick]))
    return out


# ---------------------------------------------------------------------------
# upsampling


def model_field(params: NetParams):
    """Flow velocity field or, for a conditioned network, a baseline field."""
    if params.arch.cond_dim:

        def field(x, t, cond):
            out, _ = forward(params, x, t, cond)
            return out.astype(np.float64)

        return field
    return as_field(params)


def refine_patch(params: NetParams | None, sparse_norm, dcfg: DensifyConfig, sched: ScheduleConfig,
                 rng, baseline_steps: int | None = None) -> np.ndarray:
    """Densify one normalized patch and transport it with the learned field.

    ``params=None`` returns the densified cloud itself (the zero-field output).
    """
    x0 = midpoint_densify(sparse_norm, dcfg, rng=rng)
    if params is None:
        return x0
    if params.arch.cond_dim:
        steps = baseline_steps or sched.num_steps
        return baseline_sample(model_field(params), x0, steps, DiffusionSchedule(), rng)
    return euler_sample(model_field(params), x0, sched)


def patch_groups(cloud, patch_size: int, overlap: float = PATCH_OVERLAP) -> list[np.ndarray]:
    """Index sets of overlapping kNN patches around FPS seeds."""
    n = len(cloud)
    if n <= patch_size:
        return [np.arange(n)]
    count = math.ceil(overlap * n / patch_size)
    seeds = fps(cloud, count, seed_index=0)
    groups = []
    for s in seeds:
        d2 = ((cloud - cloud[s]) ** 2).sum(axis=1)
        groups.append(np.sort(np.argsort(d2, kind="stable")[:patch_size]))
    return groups


def upsample_once(cloud, params: NetParams | None, cfg: RunConfig, seed: int = 0) -> np.ndarray:
    """One pass at the trained rate; exactly ``rate * len(cloud)`` points out."""
    pts = as_cloud(cloud)
    gamma = cfg.densify.gamma
    if len(pts) < gamma:
        raise InvalidArgumentError(f"need at least {gamma} input points, got {len(pts)}")
    dcfg = cfg.densify_config(inference=True)
    sched = cfg.schedule()
    pieces = []
    for k, idx in enumerate(patch_groups(pts, cfg.data.sparse_size)):
        if len(idx) < gamma:
            continue
        local, norm = normalize(pts[idx])
        rng = np.random.default_rng([cfg.run.seed, 20, seed, k])
        pieces.append(norm.invert(refine_patch(params, local, dcfg, sched, rng)))
    merged = np.concatenate(pieces)
    target = gamma * len(pts)
    if len(merged) > target:
        merged = merged[fps(merged, target, seed_index=0)]
    return merged


def upsample(cloud, rate: int, params: NetParams | None, cfg: RunConfig) -> np.ndarray:
    """Arbitrary integer rate: repeat trained-rate passes, then FPS to the exact count."""
    pts = as_cloud(cloud)
    if int(rate) != rate or rate < 2:
        raise InvalidArgumentError(f"rate must be an integer >= 2, got {rate}")
    target = int(rate) * len(pts)
    cur = pts
    level = 0
    while len(cur) < target:
        cur = upsample_once(cur, params, cfg, seed=level)
        level += 1
    if len(cur) > target:
        cur = cur[fps(cur, target, seed_index=0)]
    return cur


def evaluate_heldout(params: NetParams | None, cfg: RunConfig, input_eta: float = 0.0,
                     shapes=None) -> dict[str, float]:
    """CD of rate-x upsampling for each held-out shape, keyed by shape name."""
    out = {}
    for k, h in enumerate(held_out_shapes(cfg, shapes)):
        inp = add_noise(h.sparse, input_eta, np.random.default_rng([cfg.run.seed, 30, k]))
        pred = upsample(inp, cfg.data.rate, params, cfg)
        out[h.name] = chamfer(pred, h.gt)
    return out
