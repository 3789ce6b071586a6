"""Where the closed-form incentive conditions hold, over leader bonus and attacker share.

    python3 scripts/incentive_region.py --out results/incentives
"""
import argparse
import csv
from fractions import Fraction
from pathlib import Path

from iniva.incentives import GameParams, condition_report


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("results/incentives"))
    ap.add_argument("--trials", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    with open(args.out / "region.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["m", "b_l", "condition", "threshold", "holds", "empirical_margin", "stderr"])
        for m in (Fraction(1, 10), Fraction(1, 5), Fraction(1, 3), Fraction(2, 5)):
            for b_l in (Fraction(5, 100), Fraction(10, 100), Fraction(15, 100), Fraction(30, 100)):
                params = GameParams(m=m, b_l=b_l, trials=args.trials, seed=args.seed)
                for r in condition_report(params):
                    w.writerow([m, b_l, r.condition, r.threshold, int(r.holds), f"{r.margin:.8f}", f"{r.stderr:.8f}"])
                    print(f"m={m} b_l={b_l} {r.condition:22s} {'holds' if r.holds else 'fails':5s} "
                          f"margin={r.margin:+.5f}")


if __name__ == "__main__":
    main()
