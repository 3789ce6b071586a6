"""Targeted-omission success rate against attacker share for Iniva, star and gossip.

    python3 scripts/omission_sweep.py --out results/omission
"""
import argparse
import csv
from pathlib import Path

import numpy as np

from iniva.adversary import GossipConfig, gosig_collateral_samples, sweep

M_VALUES = [0.01, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("results/omission"))
    ap.add_argument("--trials", type=int, default=1_000_000)
    ap.add_argument("--gossip-trials", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    rows = []
    for protocol, fanout in (("star", 0), ("iniva", 10)):
        for p in sweep(protocol, 111, fanout, M_VALUES, [0], args.trials, args.seed):
            rows.append({"protocol": protocol, "k": "", "free": 0, "m": p.m, "rate": p.success_rate})
            print(f"{protocol:5s} m={p.m:<5} rate={p.success_rate:.5f}")
    for k in (1, 2, 4):
        for free in (0.0, 0.3):
            for m in M_VALUES:
                cost = gosig_collateral_samples(GossipConfig(111, k, m, free), args.gossip_trials, args.seed)
                rate = float(np.mean(cost <= 0))
                rows.append({"protocol": "gosig", "k": k, "free": free, "m": m, "rate": rate})
                print(f"gosig k={k} free={free} m={m:<5} rate={rate:.4f}")

    with open(args.out / "omission_vs_m.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["protocol", "k", "free", "m", "rate"], lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


if __name__ == "__main__":
    main()
