"""Run the easy or hard synthetic sweep and print crossing budgets.

    python3 scripts/run_sweep.py easy --runs 5 --n-test 10000 --out easy.csv
"""

import argparse
import logging
import math

from gmsketch.harness import ESTIMATORS, easy_config, hard_config, run_experiment


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("problem", choices=("easy", "hard"))
    ap.add_argument("--n-train", type=int, default=10**6)
    ap.add_argument("--n-test", type=int, default=10**4)
    ap.add_argument("--runs", type=int, default=5)
    ap.add_argument("--d", type=int, default=5)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--threshold", type=float, default=0.05)
    ap.add_argument("--out")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    make = easy_config if args.problem == "easy" else hard_config
    cfg = make(n_train=args.n_train, n_test=args.n_test, runs=args.runs, d=args.d,
               seed=args.seed, output=args.out)
    res = run_experiment(cfg)

    print(f"{'budget':>8} " + " ".join(f"{k:>16}" for k in ESTIMATORS))
    for b in cfg.budgets:
        cells = []
        for k in ESTIMATORS:
            c = res.cell(k, b)
            cells.append(f"{c.imprecise_fraction_mean:7.4f}+-{c.stderr:.4f}" if c.supported else "unsupported")
        print(f"{'2^%d' % math.log2(b):>8} " + " ".join(f"{s:>16}" for s in cells))
    for k in ESTIMATORS:
        cross = res.crossing_budget(k, args.threshold)
        print(f"{k}: first budget with imprecise fraction <= {args.threshold}: "
              + ("none" if cross is None else f"2^{int(math.log2(cross))}"))


if __name__ == "__main__":
    main()
