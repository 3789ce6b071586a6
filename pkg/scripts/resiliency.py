"""Inclusion, failed views and latency under crashes, with and without 2nd-chance messages.

    python3 scripts/resiliency.py --out results/resiliency
"""
import argparse
import csv
from pathlib import Path

from iniva.simnet import SimConfig, run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("results/resiliency"))
    ap.add_argument("--views", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    with open(args.out / "resiliency.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["second_chance", "crashes", "failed_fraction", "mean_correct_inclusion",
                    "mean_included_votes", "mean_latency_delta"])
        for second_chance in (True, False):
            for crashes in range(0, 8):
                cfg = SimConfig(n=21, fanout=4, crashes=crashes, views=args.views, seed=args.seed,
                                second_chance=second_chance)
                m = run(cfg)
                ok = m.successful
                latency = sum(r.qc_time for r in ok) / len(ok) / cfg.delta if ok else float("nan")
                w.writerow([int(second_chance), crashes, f"{m.failed_fraction:.4f}", f"{m.mean_inclusion:.4f}",
                            f"{m.mean_included:.3f}", f"{latency:.3f}"])
                print(f"2c={int(second_chance)} crashes={crashes} failed={m.failed_fraction:.3f} "
                      f"inclusion={m.mean_inclusion:.4f} latency={latency:.2f} delta")


if __name__ == "__main__":
    main()
