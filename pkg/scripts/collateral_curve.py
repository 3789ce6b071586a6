"""Iniva omission success rate against the collateral budget.

    python3 scripts/collateral_curve.py --out results/collateral
"""
import argparse
import csv
from pathlib import Path

from iniva.adversary import INF, sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("results/collateral"))
    ap.add_argument("--trials", type=int, default=1_000_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    budgets = list(range(0, 16)) + [INF]
    with open(args.out / "collateral.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["m", "c", "rate", "two_m_squared"])
        for p in sweep("iniva", 111, 10, [0.05, 0.1], budgets, args.trials, args.seed):
            c = "inf" if p.c == INF else int(p.c)
            w.writerow([p.m, c, f"{p.success_rate:.6f}", f"{2 * p.m * p.m:.6f}"])
            print(f"m={p.m} c={c:>3} rate={p.success_rate:.5f}")


if __name__ == "__main__":
    main()
