"""Reward lost by the victim and by the attackers under targeted omission.

    python3 scripts/reward_loss.py --out results/rewards
"""
import argparse
import csv
from pathlib import Path

from iniva.adversary import INF, RewardLossConfig, reward_loss_experiment, star_params
from iniva.rewards import RewardParams

TREES = {10: (111, 10), 4: (109, 4)}


def run(protocol, n, fanout, m, collateral, trials, seed, attack="omission"):
    params = RewardParams(n=n)
    if protocol == "star":
        params = star_params(params)
    return reward_loss_experiment(RewardLossConfig(protocol, n, fanout, m, attack, collateral, params, trials, seed))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("results/rewards"))
    ap.add_argument("--trials", type=int, default=20_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    with open(args.out / "victim_share.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["protocol", "m", "victim_delta", "attacker_delta"])
        for m in (0.05, 0.1, 0.15, 0.2, 0.25, 0.3):
            for protocol in ("star", "iniva"):
                r = run(protocol, 111, 10, m, 0, args.trials, args.seed)
                w.writerow([protocol, m, f"{r.victim_delta:.6f}", f"{r.attacker_delta:.6f}"])
                print(f"{protocol:5s} m={m:<4} victim {r.victim_delta:+.2%} attacker {r.attacker_delta:+.3%}")

    with open(args.out / "attacker_loss.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["internals", "m", "iniva_loss", "star_loss", "ratio"])
        for internals, (n, fanout) in TREES.items():
            for m in (0.05, 0.1, 0.2, 0.3):
                i = run("iniva", n, fanout, m, INF, args.trials, args.seed).attacker_loss
                s = run("star", n, fanout, m, INF, args.trials, args.seed).attacker_loss
                w.writerow([internals, m, f"{i:.8f}", f"{s:.8f}", f"{i / s:.3f}"])
                print(f"{internals} internals m={m:<4} ratio {i / s:.1f}x")


if __name__ == "__main__":
    main()
