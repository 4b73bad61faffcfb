"""Alignment ablation on the toy task: matched pairs against arbitrary pairing.

Reports the final-iteration loss and the 5-step CD of both variants for a few seeds.

    python scripts/ablation.py --seeds 0 1 2
"""

import argparse

from flowup.toy import ToyConfig, eval_draws, mean_cd, train_variant


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--demo", default="sphere-torus")
    ap.add_argument("--iterations", type=int, default=2000)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    args = ap.parse_args()
    print("seed\tvariant\tfinal_loss\tcd_5_steps")
    for seed in args.seeds:
        tc = ToyConfig(demo=args.demo, iterations=args.iterations, seed=seed)
        draws = eval_draws(tc)
        for variant in ("aligned", "unaligned"):
            res = train_variant(tc, variant)
            cd = mean_cd(res.params, variant, tc.flow_steps, draws, tc)
            print(f"{seed}\t{variant}\t{res.losses[-1][1]:.6g}\t{cd:.6g}", flush=True)


if __name__ == "__main__":
    main()
