"""Command-line entry point: ``flowup <command> [options]``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io as fio
from .config import SEED_ENV, RunConfig
from .errors import (
    CheckpointError,
    ConvergenceError,
    DegenerateInputError,
    FileFormatError,
    InvalidArgumentError,
    NumericalError,
)
from .metrics import evaluate
from .pipeline import build_patches, read_patches, upsample, write_patches
from .train import train

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("flowup")


class DataError(Exception):
    """Missing or unreadable inputs; mapped to exit code 3."""


def load_config(path) -> RunConfig:
    if path is None:
        return RunConfig.from_text("")
    return RunConfig.load(path)


def read_cloud(path) -> np.ndarray:
    p = Path(path)
    if not p.exists():
        raise DataError(f"{p}: no such file")
    if p.suffix.lower() == ".ply":
        return fio.read_ply(p, dtype=np.float64)
    return fio.read_xyz(p)


def write_cloud(cloud, path) -> None:
    p = Path(path)
    if p.suffix.lower() == ".ply":
        fio.write_ply(cloud, p, binary=True)
    else:
        fio.write_xyz(cloud, p)


# ---------------------------------------------------------------------------
# commands


def cmd_print_config(args) -> int:
    sys.stdout.write(load_config(args.config).to_text())
    return EXIT_OK


def cmd_build_data(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out or cfg.data.out_dir)
    patches = build_patches(cfg)
    try:
        manifest = write_patches(patches, out, shapes=cfg.data.train_shapes)
    except OSError as exc:
        raise DataError(f"cannot write dataset to {out}: {exc.strerror}") from None
    print(f"wrote {len(patches)} patch pairs; manifest {manifest}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.no_align:
        cfg.transport.align = False
    if args.baseline:
        cfg.run.method = args.baseline
    if args.workers is not None:
        cfg.run.workers = args.workers
    if args.iterations is not None:
        cfg.optim.iterations = args.iterations
    if cfg.run.workers < 1:
        raise InvalidArgumentError("--workers must be >= 1")
    cfg.validate()
    data = Path(args.data or cfg.data.out_dir)
    if not (data / "manifest.json").exists():
        raise DataError(f"dataset missing: {data / 'manifest.json'} not found (run build-data)")
    patches = read_patches(data)
    checkpoint = args.checkpoint or cfg.run.checkpoint
    loss_log = args.loss_log or cfg.run.loss_log
    res = train(patches, cfg, log_path=loss_log, checkpoint_path=checkpoint, progress_every=100)
    last = res.losses[-1][1] if res.losses else float("nan")
    print(f"trained {len(res.losses)} iterations; final loss {last:.6g}; checkpoint {checkpoint}")
    return EXIT_OK


def cmd_upsample(args) -> int:
    cfg = load_config(args.config)
    if args.inference_eta is not None:
        if args.inference_eta < 0:
            raise InvalidArgumentError("--inference-eta must be >= 0")
        cfg.flow.inference_eta = args.inference_eta
    if args.steps is not None:
        cfg.flow.num_steps = args.steps
    cfg.validate()
    cloud = read_cloud(args.input)
    params = None
    if not args.densify_only:
        if args.checkpoint is None:
            raise InvalidArgumentError("upsample needs --checkpoint or --densify-only")
        params, _, meta = fio.load_checkpoint(args.checkpoint)
        gamma = int(meta.get("gamma", cfg.densify.gamma))
        if gamma != cfg.densify.gamma:
            raise CheckpointError(
                f"checkpoint was trained at rate {gamma}, config has gamma={cfg.densify.gamma}",
                args.checkpoint)
        if params.arch.in_dim != 3:
            raise CheckpointError(f"incompatible architecture: in_dim={params.arch.in_dim}", args.checkpoint)
    out = upsample(cloud, args.rate, params, cfg)
    write_cloud(out, args.out)
    print(f"{len(cloud)} -> {len(out)} points written to {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    pred = read_cloud(args.pred)
    gt = read_cloud(args.gt)
    mesh = fio.read_obj(args.mesh) if args.mesh else None
    label = args.label or Path(args.pred).stem
    report = evaluate(pred, gt, mesh=mesh, unit_box=not args.raw_scale, label=label,
                      provenance={"pred": args.pred, "gt": args.gt})
    text = report.to_text()
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    if args.table:
        report.append_to_table(args.table)
    return EXIT_OK


def cmd_toy(args) -> int:
    from .toy import VARIANTS, ToyConfig, run_toy

    tc = ToyConfig(demo=args.demo, seed=load_config(args.config).run.seed)
    if args.iterations is not None:
        tc.iterations = args.iterations
    variants = tuple(args.variants.split(",")) if args.variants else VARIANTS
    for v in variants:
        if v not in VARIANTS:
            raise InvalidArgumentError(f"unknown variant {v!r}; have {VARIANTS}")
    report = run_toy(tc, out_dir=args.out, variants=variants)
    sys.stdout.write(report.table_text())
    sys.stdout.write(report.summary())
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="flowup", description=__doc__.splitlines()[0],
                                 epilog=f"The master seed can be overridden with ${SEED_ENV}.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("--config", help="run config file (sectioned key = value)")
        return p

    p = with_config(sub.add_parser("print-config", help="print the effective configuration"))
    p.set_defaults(func=cmd_print_config)

    p = with_config(sub.add_parser("build-data", help="sample training patches to disk"))
    p.add_argument("--out", help="output directory (default data.out_dir)")
    p.set_defaults(func=cmd_build_data)

    p = with_config(sub.add_parser("train", help="train the flow model or the baseline"))
    p.add_argument("--data", help="dataset directory (default data.out_dir)")
    p.add_argument("--no-align", action="store_true", help="pair points by stored order")
    p.add_argument("--baseline", choices=["ddpm"], help="train the noise-to-data baseline")
    p.add_argument("--workers", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--checkpoint")
    p.add_argument("--loss-log")
    p.set_defaults(func=cmd_train)

    p = with_config(sub.add_parser("upsample", help="upsample a point cloud by an integer rate"))
    p.add_argument("input")
    p.add_argument("--rate", type=int, required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--densify-only", action="store_true", help="skip the network (zero field)")
    p.add_argument("--inference-eta", type=float)
    p.add_argument("--steps", type=int, help="sampling steps (default flow.num_steps)")
    p.add_argument("--out", required=True, help=".xyz or .ply")
    p.set_defaults(func=cmd_upsample)

    p = sub.add_parser("eval", help="CD, HD and optional P2F of a prediction")
    p.add_argument("pred")
    p.add_argument("gt")
    p.add_argument("--mesh", help="OBJ mesh for point-to-face distance")
    p.add_argument("--raw-scale", action="store_true",
                   help="skip the default scaling of all inputs to the ground truth's unit box")
    p.add_argument("--label")
    p.add_argument("--out", help="also write the key=value report here")
    p.add_argument("--table", help="append a row to this TSV results table")
    p.set_defaults(func=cmd_eval)

    p = with_config(sub.add_parser("toy", help="toy distribution-transfer demo"))
    p.add_argument("--demo", default="sphere-torus")
    p.add_argument("--iterations", type=int)
    p.add_argument("--variants", help="comma list of aligned,unaligned,ddpm")
    p.add_argument("--out", default="toy_out")
    p.set_defaults(func=cmd_toy)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (NumericalError, ConvergenceError) as exc:
        print(f"flowup: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FileFormatError, DegenerateInputError, DataError) as exc:
        print(f"flowup: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"flowup: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except InvalidArgumentError as exc:
        print(f"flowup: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
