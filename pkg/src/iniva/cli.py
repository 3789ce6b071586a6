"""Command-line entry point: ``iniva <subcommand> [options]``.

Every run writes its CSV/JSON outputs and a ``manifest.json`` (resolved
configuration, package and library versions) into ``--out``.
``iniva replay <manifest>`` re-runs a manifest with identical results.

Exit codes: 0 success, 2 configuration error, 3 a ``--assert`` check failed.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import platform
import sys
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .adversary import omission, reward_loss
from .adversary.gosig import GossipConfig, gosig_collateral_samples
from .incentives import GameParams, condition_report, dominance_report, strategy_grid
from .overlay import RoundSeed, tree_for_view
from .rewards import RewardParams
from .sigagg import digest
from .simnet import SimConfig, config_dict, run

SWEEP_COLUMNS = ["protocol", "n", "fanout", "m", "c", "k", "free", "greedy", "trials",
                 "success_rate", "stderr"]

EXIT_OK, EXIT_CONFIG, EXIT_ASSERT = 0, 2, 3


class ConfigError(ValueError):
    pass


def threads() -> int:
    raw = os.environ.get("INIVA_THREADS", "1")
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"INIVA_THREADS must be an integer, got {raw!r}") from None
    if value < 1:
        raise ConfigError("INIVA_THREADS must be >= 1")
    return value


def _pmap(fn, items):
    items = list(items)
    workers = threads()
    if workers == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# argument parsing helpers

def float_list(text: str) -> list[float]:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise argparse.ArgumentTypeError("expected a non-empty comma-separated list")
    try:
        return [math.inf if p.lower() in ("inf", "any") else float(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}") from None


def int_list(text: str) -> list[int]:
    values = float_list(text)
    if any(v != int(v) for v in values):
        raise argparse.ArgumentTypeError(f"not a list of integers: {text!r}")
    return [int(v) for v in values]


def fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number or ratio: {text!r}") from None


def collateral_value(text: str) -> float:
    v = float_list(text)
    if len(v) != 1:
        raise argparse.ArgumentTypeError("expected one value")
    return v[0]


def _csv(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def _fmt(x) -> str:
    if isinstance(x, float) and math.isinf(x):
        return "inf"
    if isinstance(x, float) and x == int(x):
        return str(int(x))
    return str(x)


# subcommands: each returns (outputs {name: text}, failed checks)

def cmd_simulate_omission(a) -> tuple[dict, list]:
    if a.protocol == "gosig":
        raise ConfigError("use simulate-gosig for the gossip model")
    for m in a.m_list:
        if not 0 < m < 1 or m * a.n < 1:
            raise ConfigError(f"m={m} must lie in (0, 1) with m*n >= 1")
    if any(c < 0 for c in a.collateral):
        raise ConfigError("collateral must be >= 0")
    if a.trials < 1:
        raise ConfigError("trials must be >= 1")
    fanout = a.fanout if a.protocol == "iniva" else 0
    points = _pmap(lambda m: omission.sweep(a.protocol, a.n, fanout, [m], a.collateral, a.trials, a.seed),
                   a.m_list)
    rows, failed = [], []
    for pt in (p for group in points for p in group):
        row = pt.row()
        row["c"] = _fmt(pt.c)
        row["fanout"] = pt.fanout if a.protocol == "iniva" else ""
        rows.append(row)
        failed += _check_omission(pt)
    return {"omission.csv": _csv(rows, SWEEP_COLUMNS)}, failed


def _check_omission(pt) -> list[str]:
    rate, m = pt.success_rate, pt.m
    if pt.protocol == "star":
        ok = abs(rate - m) <= 3 * math.sqrt(m * (1 - m) / pt.trials)
        return [] if ok else [f"star m={m}: rate {rate:.5f} not within 3 sigma of m"]
    if pt.c == 0:
        ok = abs(rate - m * m) <= max(0.2 * m * m, 0.003)
        return [] if ok else [f"iniva m={m} c=0: rate {rate:.5f} vs m^2={m * m:.5f}"]
    if 1 <= pt.c <= 5 and m <= 0.1:
        ok = abs(rate - 2 * m * m) <= 0.3 * 2 * m * m
        return [] if ok else [f"iniva m={m} c={pt.c}: rate {rate:.5f} vs 2m^2={2 * m * m:.5f}"]
    if pt.c >= pt.fanout:
        ok = abs(rate - m) <= 0.15 * m
        return [] if ok else [f"iniva m={m} c={pt.c}: rate {rate:.5f} vs m={m}"]
    return []


def cmd_simulate_gosig(a) -> tuple[dict, list]:
    if any(k < 1 for k in a.k_list):
        raise ConfigError("k must be >= 1")
    if not 0 <= a.free <= 1:
        raise ConfigError("--free must lie in [0, 1]")
    for m in a.m_list:
        if not 0 < m < 1 or m * a.n < 1:
            raise ConfigError(f"m={m} must lie in (0, 1) with m*n >= 1")
    grid = [(k, m) for k in a.k_list for m in a.m_list]

    def one(km):
        k, m = km
        cfg = GossipConfig(a.n, k, m, a.free, a.greedy)
        cost = gosig_collateral_samples(cfg, a.trials, a.seed)
        return omission.SweepPoint("gosig", a.n, 0, m, a.collateral, a.trials,
                                   int(np.count_nonzero(omission.affordable(cost, a.collateral))), k, a.free, a.greedy)

    rows, failed = [], []
    for pt in _pmap(one, grid):
        row = pt.row()
        row["fanout"] = ""
        row["c"] = _fmt(pt.c)
        rows.append(row)
        failed += _check_gosig(pt)
    return {"gosig.csv": _csv(rows, SWEEP_COLUMNS)}, failed


def _check_gosig(pt) -> list[str]:
    rate, m = pt.success_rate, pt.m
    if pt.k == 2 and m == 0.05 and not pt.greedy and pt.c == 0:
        if pt.free == 0 and abs(rate - 0.04) > 0.02:
            return [f"gosig honest k=2 m=0.05: rate {rate:.4f} outside 0.04 +- 0.02"]
        if pt.free == 0.3 and abs(rate - 0.24) > 0.05:
            return [f"gosig free=0.3 k=2 m=0.05: rate {rate:.4f} outside 0.24 +- 0.05"]
    if m >= 0.25 and pt.free == 0 and not pt.greedy and abs(rate - m) > 0.15 * m:
        return [f"gosig k={pt.k} m={m}: rate {rate:.4f} not within 15% of m"]
    return []


REWARD_COLUMNS = ["protocol", "n", "fanout", "m", "attack", "collateral", "trials", "attack_rate",
                  "victim_delta", "attacker_delta", "victim_loss", "attacker_loss"]

TREES = {10: (111, 10), 4: (109, 4)}


def cmd_simulate_rewards(a) -> tuple[dict, list]:
    n, fanout = TREES[a.internals]
    for m in a.m_list:
        if not 0 <= m < 0.5:
            raise ConfigError(f"m={m} must lie in [0, 0.5)")
    try:
        params = RewardParams(1, a.bl, a.ba, n)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    protocols = ["iniva", "star"] if a.protocol == "both" else [a.protocol]
    jobs = [(proto, m) for proto in protocols for m in a.m_list]

    def one(job):
        proto, m = job
        p = params if proto == "iniva" else reward_loss.star_params(params)
        cfg = reward_loss.RewardLossConfig(proto, n, fanout, m, a.attack, a.collateral, p, a.trials, a.seed)
        return reward_loss.reward_loss_experiment(cfg)

    results = _pmap(one, jobs)
    rows, failed = [], []
    for r in results:
        row = r.row()
        row["collateral"] = _fmt(float(r.config.collateral))
        rows.append(row)
        c = r.config
        if c.attack == "omission" and c.m == 0.3 and c.collateral == 0:
            target, tol = (0.25, 0.05) if c.protocol == "star" else (0.07, 0.03)
            if abs(-r.victim_delta - target) > tol:
                failed.append(f"{c.protocol} m=0.3: victim reduction {-r.victim_delta:.4f} "
                              f"outside {target} +- {tol}")
        if c.m == 0 and (r.victim_delta != 0 or r.attacker_delta != 0):
            failed.append(f"{c.protocol} m=0: non-zero deviation")
    return {"rewards.csv": _csv(rows, REWARD_COLUMNS)}, failed


def cmd_run_protocol(a) -> tuple[dict, list]:
    crash_set = tuple(a.crash_set) if a.crash_set is not None else None
    try:
        cfg = SimConfig(n=a.n, fanout=a.fanout, delta=a.delta_ticks, crashes=a.crashes,
                        crash_set=crash_set, views=a.views, seed=a.seed,
                        second_chance_delta=a.second_chance_delta, second_chance=not a.no2c)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    metrics = run(cfg, trace=a.trace)
    out = {"views.csv": metrics.to_csv(), "summary.json": metrics.summary_json()}
    if a.trace:
        out["trace.csv"] = metrics.trace_csv()
    failed = []
    if not a.no2c and metrics.successful and metrics.mean_inclusion <= 0.99:
        failed.append(f"mean correct inclusion {metrics.mean_inclusion:.4f} <= 0.99")
    if not cfg.crashed() and metrics.failed_fraction > 0:
        failed.append("failed views without any crash")
    return out, failed


INCENTIVE_COLUMNS = ["condition", "threshold", "value", "holds", "empirical_margin", "stderr"]
GRID_COLUMNS = ["e_l", "e_v", "e_a", "e_p", "advantage", "stderr", "dominated"]


def cmd_check_incentives(a) -> tuple[dict, list]:
    try:
        params = GameParams(m=a.m, f=a.f, b_l=a.bl, b_a=a.ba, trials=a.trials, seed=a.seed)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    rows = condition_report(params)
    out = {"incentives.csv": _csv([r.row() for r in rows], INCENTIVE_COLUMNS)}
    failed = [f"{r.condition}: closed form says {'holds' if r.holds else 'fails'} "
              f"but margin is {r.margin:.6f}" for r in rows
              if (r.margin > -3 * r.stderr) != r.holds and abs(r.margin) > 3 * r.stderr]
    if a.grid:
        grid_params = GameParams(m=a.m, f=a.f, b_l=a.bl, b_a=a.ba, trials=a.grid_trials, seed=a.seed)
        report = dominance_report(grid_params, strategy_grid(grid_params, a.grid))
        grid_rows = [{"e_l": r.profile.e_l, "e_v": r.profile.e_v, "e_a": r.profile.e_a,
                      "e_p": r.profile.e_p, "advantage": f"{r.advantage:.8f}",
                      "stderr": f"{r.stderr:.8f}", "dominated": int(r.dominated)} for r in report.rows]
        out["dominance.csv"] = _csv(grid_rows, GRID_COLUMNS)
        holds_all = all(r.holds for r in rows)
        if holds_all and not report.all_dominated:
            failed.append(f"only {report.dominated_fraction:.1%} of the grid is dominated")
    if not all(r.holds for r in rows):
        failed.append("closed-form conditions fail: " + ", ".join(r.condition for r in rows if not r.holds))
    return out, failed


def genesis_digest(seed: int) -> bytes:
    return digest(b"iniva-genesis" + str(seed).encode())


def cmd_dump_tree(a) -> tuple[dict, list]:
    if a.view < 0:
        raise ConfigError("view must be >= 0")
    try:
        tree = tree_for_view(RoundSeed(genesis_digest(a.seed), a.view), a.n, a.fanout)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    return {"tree.txt": tree.dump()}, []


COMMANDS = {
    "simulate-omission": cmd_simulate_omission,
    "simulate-gosig": cmd_simulate_gosig,
    "simulate-rewards": cmd_simulate_rewards,
    "run-protocol": cmd_run_protocol,
    "check-incentives": cmd_check_incentives,
    "dump-tree": cmd_dump_tree,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="iniva", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--config", type=Path, help="JSON file with option values (flags override it)")
        if out:
            p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        p.add_argument("--assert", dest="check", action="store_true",
                       help="exit 3 if a reference expectation is violated")

    p = sub.add_parser("simulate-omission", help="targeted-omission success rates")
    p.add_argument("--protocol", choices=["iniva", "star", "gosig"], default="iniva")
    p.add_argument("--n", type=int, default=111)
    p.add_argument("--fanout", type=int, default=10)
    p.add_argument("--m-list", type=float_list, default=[0.05, 0.1, 0.2, 0.3])
    p.add_argument("--collateral", type=float_list, default=[0.0], help="comma list, 'inf' for any")
    p.add_argument("--trials", type=int, default=1_000_000)
    common(p)

    p = sub.add_parser("simulate-gosig", help="targeted omission under the gossip model")
    p.add_argument("--n", type=int, default=111)
    p.add_argument("--k-list", type=int_list, default=[2])
    p.add_argument("--m-list", type=float_list, default=[0.05])
    p.add_argument("--free", type=float, default=0.0, help="free-rider fraction")
    p.add_argument("--greedy", action="store_true")
    p.add_argument("--collateral", type=collateral_value, default=0.0)
    p.add_argument("--trials", type=int, default=2000)
    common(p)

    p = sub.add_parser("simulate-rewards", help="reward lost by victim and attackers")
    p.add_argument("--protocol", choices=["iniva", "star", "both"], default="both")
    p.add_argument("--attack", choices=list(reward_loss.ATTACKS), default="omission")
    p.add_argument("--m-list", type=float_list, default=[0.1, 0.2, 0.3])
    p.add_argument("--internals", type=int, choices=sorted(TREES), default=10)
    p.add_argument("--collateral", type=collateral_value, default=0.0, help="'inf' for any collateral")
    p.add_argument("--bl", type=fraction, default=Fraction(15, 100))
    p.add_argument("--ba", type=fraction, default=Fraction(2, 100))
    p.add_argument("--trials", type=int, default=10_000)
    common(p)

    p = sub.add_parser("run-protocol", help="discrete-event protocol run")
    p.add_argument("--n", type=int, default=21)
    p.add_argument("--fanout", type=int, default=4)
    p.add_argument("--crashes", type=int, default=0)
    p.add_argument("--crash-set", type=int_list, default=None, help="explicit crashed ids")
    p.add_argument("--delta-ticks", type=int, default=100)
    p.add_argument("--second-chance-delta", type=int, default=None, help="ticks, default 2*delta")
    p.add_argument("--no2c", action="store_true", help="disable 2nd-chance messages")
    p.add_argument("--views", type=int, default=1000)
    p.add_argument("--trace", action="store_true", help="also write a per-event trace")
    common(p)

    p = sub.add_parser("check-incentives", help="closed-form and empirical dominance checks")
    p.add_argument("--m", type=fraction, default=Fraction(1, 3))
    p.add_argument("--f", type=fraction, default=Fraction(1, 3))
    p.add_argument("--bl", type=fraction, default=Fraction(15, 100))
    p.add_argument("--ba", type=fraction, default=Fraction(2, 100))
    p.add_argument("--grid", type=int, default=0, help="steps per strategy parameter, 0 to skip")
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--grid-trials", type=int, default=200)
    common(p)

    p = sub.add_parser("dump-tree", help="print the aggregation tree of one view")
    p.add_argument("--n", type=int, default=111)
    p.add_argument("--fanout", type=int, default=10)
    p.add_argument("--view", type=int, default=0)
    common(p, out=False)
    p.add_argument("--out", type=Path, default=None, help="also write tree.txt here")

    p = sub.add_parser("replay", help="re-run the configuration stored in a manifest")
    p.add_argument("manifest", type=Path)
    p.add_argument("--out", type=Path, default=None, help="defaults to the manifest's directory")
    p.add_argument("--assert", dest="check", action="store_true")
    return parser


def _subparser(parser, command) -> argparse.ArgumentParser:
    return parser._subparsers._group_actions[0].choices[command]


def _apply_config(parser, argv, args):
    """Values from --config become defaults; explicit flags still win."""
    if getattr(args, "config", None) is None:
        return args
    try:
        data = json.loads(args.config.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {args.config}: {e}") from None
    sub = _subparser(parser, args.command)
    known = {a.dest for a in sub._actions}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    sub.set_defaults(**{k: _from_json(sub, k, v) for k, v in data.items()})
    return parser.parse_args(argv)


def _from_json(sub, key, value):
    action = next(a for a in sub._actions if a.dest == key)
    if action.type is not None and isinstance(value, str):
        return action.type(value)
    if action.type in (float_list, int_list) and isinstance(value, list):
        return action.type(",".join(str(v) for v in value))
    if action.type is fraction:
        return Fraction(value)
    return value


def _jsonable(v):
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, Path):
        return str(v)
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def manifest(args, outputs) -> dict:
    config = {k: _jsonable(v) for k, v in sorted(vars(args).items())
              if k not in ("out", "config", "check", "command")}
    return {
        "command": args.command,
        "config": config,
        "outputs": sorted(outputs),
        "versions": {"iniva": __version__, "python": platform.python_version(), "numpy": np.__version__},
        "threads": threads(),
    }


def _replay_args(parser, path: Path, out):
    data = json.loads(path.read_text())
    argv = [data["command"]]
    sub = _subparser(parser, data["command"])
    flags = {a.dest: a for a in sub._actions if a.option_strings}
    for key, value in data["config"].items():
        action = flags.get(key)
        if action is None:
            argv.append(str(value))
            continue
        flag = action.option_strings[0]
        if isinstance(action, argparse._StoreTrueAction):
            if value:
                argv.append(flag)
        elif value is not None:
            argv += [flag, ",".join(str(v) for v in value) if isinstance(value, list) else str(value)]
    argv += ["--out", str(out if out is not None else path.parent)]
    return argv


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    try:
        check = args.check
        if args.command == "replay":
            argv = _replay_args(parser, args.manifest, args.out) + (["--assert"] if check else [])
            args = parser.parse_args(argv)
        args = _apply_config(parser, argv, args)
        outputs, failed = COMMANDS[args.command](args)
    except (ConfigError, ValueError, KeyError, OSError) as e:
        _subparser(parser, args.command).print_usage(sys.stderr)
        print(f"iniva {args.command}: error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "dump-tree":
        sys.stdout.write(outputs["tree.txt"])
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        for name, text in outputs.items():
            (args.out / name).write_text(text, encoding="utf-8")
        (args.out / "manifest.json").write_text(
            json.dumps(manifest(args, outputs), sort_keys=True, indent=2) + "\n", encoding="utf-8")
        if args.command != "dump-tree":
            print(f"wrote {', '.join(sorted(outputs))} and manifest.json to {args.out}")
    for msg in failed:
        print(f"CHECK FAILED: {msg}", file=sys.stderr)
    if check and failed:
        return EXIT_ASSERT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
