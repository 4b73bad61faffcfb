"""CD against sampling steps for the flow model and the noise-to-data baseline.

    python scripts/convergence.py --steps 1 2 5 10 20 50 100
"""

import argparse

from flowup.toy import STEP_LADDER, ToyConfig, eval_draws, mean_cd, steps_to_match, train_variant


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--demo", default="sphere-torus")
    ap.add_argument("--iterations", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--steps", type=int, nargs="+", default=list(STEP_LADDER))
    args = ap.parse_args()
    tc = ToyConfig(demo=args.demo, iterations=args.iterations, seed=args.seed)
    draws = eval_draws(tc)
    steps = sorted(set(args.steps) | {tc.flow_steps})
    table = {}
    for variant in ("aligned", "ddpm"):
        params = train_variant(tc, variant).params
        table[variant] = {s: mean_cd(params, variant, s, draws, tc) for s in steps}
        print(variant + "\t" + "\t".join(f"{s}:{v:.5g}" for s, v in table[variant].items()), flush=True)
    target = table["aligned"][tc.flow_steps]
    print(f"baseline steps to match the flow's {tc.flow_steps}-step CD: {steps_to_match(table['ddpm'], target)}")


if __name__ == "__main__":
    main()
