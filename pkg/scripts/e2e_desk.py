"""Train the desk-scale model, then compare held-out 4x CD against densify-only.

    python scripts/e2e_desk.py --iterations 1500 --out runs/desk
"""

import argparse
import logging
import time
from pathlib import Path

from flowup.io import save_checkpoint
from flowup.pipeline import build_patches, evaluate_heldout
from flowup.presets import desk_config
from flowup.train import checkpoint_meta, train


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--iterations", type=int)
    ap.add_argument("--steps", type=int, nargs="*", default=[1, 5], help="sampler step counts to evaluate")
    ap.add_argument("--out", default="runs/desk")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    cfg = desk_config() if args.iterations is None else desk_config(args.iterations)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.cfg").write_text(cfg.to_text())
    start = time.perf_counter()
    res = train(build_patches(cfg), cfg, log_path=out / "loss.log", progress_every=100)
    print(f"trained {cfg.optim.iterations} iterations in {time.perf_counter() - start:.0f}s")
    params = res.sampling_params
    save_checkpoint(params, None, checkpoint_meta(cfg, cfg.optim.iterations), out / "model.pufm")

    rows = []
    for eta in (0.0, 0.01):
        base = evaluate_heldout(None, cfg, input_eta=eta)
        for steps in args.steps:
            cfg.flow.num_steps = steps
            model = evaluate_heldout(params, cfg, input_eta=eta)
            for shape in base:
                rows.append(f"{shape}\t{eta}\t{steps}\t{base[shape]:.6g}\t{model[shape]:.6g}\t"
                            f"{model[shape] / base[shape]:.4f}")
    table = "shape\tinput_eta\tsteps\tcd_densify_only\tcd_model\tratio\n" + "\n".join(rows) + "\n"
    (out / "heldout.tsv").write_text(table)
    print(table)


if __name__ == "__main__":
    main()
