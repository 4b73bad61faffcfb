"""Toy transfer demo: trains all variants, writes trajectories and the step table.

    python scripts/toy_demo.py --demo sphere-torus --out runs/toy
"""

import argparse
import time

from flowup.toy import DEMOS, VARIANTS, ToyConfig, run_toy


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--demo", choices=sorted(DEMOS), default="sphere-torus")
    ap.add_argument("--iterations", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--variants", default=",".join(VARIANTS))
    ap.add_argument("--out", default="runs/toy")
    args = ap.parse_args()
    tc = ToyConfig(demo=args.demo, iterations=args.iterations, seed=args.seed)
    start = time.perf_counter()
    report = run_toy(tc, out_dir=args.out, variants=tuple(args.variants.split(",")))
    print(report.table_text())
    print(report.summary())
    print(f"elapsed {time.perf_counter() - start:.0f}s")


if __name__ == "__main__":
    main()
