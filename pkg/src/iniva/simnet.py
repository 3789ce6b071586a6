"""Deterministic discrete-event driver for Iniva views.

Time is integer ticks (``delta`` ticks per Δ, 100 by default).  Message
delays are a keyed hash of (seed, view, src, dst, message kind), uniform on
``(delay_floor, delta]``, so two runs that differ only in a timer value see
exactly the same network.
"""
from __future__ import annotations

import csv
import hashlib
import heapq
import io
import json
import math
import random
import struct
from collections import Counter
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from typing import Optional

from . import protocol as P
from .overlay import RoundSeed, leader_of, tree_for_view
from .rewards import DEFAULT_F

_KIND = {P.Proposal: 1, P.Vote: 2, P.Ack: 3, P.SecondChance: 4, P.SecondChanceReply: 5}


@dataclass(frozen=True)
class SimConfig:
    n: int = 21
    fanout: int = 4
    delta: int = 100
    # delays are drawn from (delay_floor, delta]
    delay_floor: int = 50
    crashes: int = 0
    crash_set: Optional[tuple[int, ...]] = None
    views: int = 100
    seed: int = 0
    second_chance_delta: Optional[int] = None
    t_valid: Optional[int] = None
    second_chance: bool = True
    f: Fraction = DEFAULT_F

    def __post_init__(self):
        if self.n < 1 + self.fanout:
            raise ValueError(f"n={self.n} too small for fanout {self.fanout}")
        if not 0 <= self.delay_floor < self.delta:
            raise ValueError("need 0 <= delay_floor < delta")
        limit = math.floor(Fraction(self.f) * self.n)
        count = len(self.crash_set) if self.crash_set is not None else self.crashes
        if count > limit:
            raise ValueError(f"{count} crashes exceed floor(f*n) = {limit}")
        if self.crash_set is not None and any(not 0 <= p < self.n for p in self.crash_set):
            raise ValueError("crash_set names unknown processes")

    @property
    def protocol_params(self) -> P.ProtocolParams:
        return P.ProtocolParams(self.n, self.fanout, self.delta, self.second_chance_delta,
                                self.t_valid, self.second_chance, self.f)

    def crashed(self) -> frozenset[int]:
        if self.crash_set is not None:
            return frozenset(self.crash_set)
        rng = random.Random(f"crash:{self.seed}")
        return frozenset(rng.sample(range(self.n), self.crashes))


def message_delay(config: SimConfig, view: int, src: int, dst: int, kind: int) -> int:
    if src == dst:
        return 0
    h = hashlib.blake2b(struct.pack("<qqqqq", config.seed, view, src, dst, kind), digest_size=8).digest()
    span = config.delta - config.delay_floor
    return config.delay_floor + 1 + int.from_bytes(h, "little") % span


@dataclass
class ViewResult:
    view: int
    proposer: int
    root: int
    crashed: frozenset
    failed: bool
    reason: str = ""
    qc: Optional[P.QuorumCertificate] = None
    qc_time: Optional[int] = None
    delivered: frozenset = frozenset()
    tree: object = None
    block: Optional[P.Block] = None
    signatures_made: dict = field(default_factory=dict)
    trace: list = field(default_factory=list)

    @property
    def correct(self) -> frozenset:
        return frozenset(range(self.tree.n)) - self.crashed if self.tree else frozenset()

    @property
    def included(self) -> int:
        return len(self.qc.signers) if self.qc else 0

    @property
    def included_correct(self) -> float:
        if self.qc is None:
            return 0.0
        correct = self.correct
        return len(self.qc.signers & correct) / len(correct)


def simulate_view(config: SimConfig, view: int, crashed=frozenset(), parent_qc=None,
                  height: int = 1, trace: bool = False) -> ViewResult:
    """Run one view from block creation at t=0 until the root emits a QC or gives up."""
    params = config.protocol_params
    crashed = frozenset(crashed)
    n = config.n
    proposer = leader_of(view, n)
    block = P.Block(height, view, parent_qc, P.sigagg.digest(b"payload" + struct.pack("<qq", config.seed, view)), 0)
    tree = tree_for_view(RoundSeed(block.qc_digest, view), n, config.fanout)
    result = ViewResult(view, proposer, tree.root, crashed, failed=True, tree=tree, block=block)
    log = result.trace if trace else None

    if proposer in crashed:
        result.reason = "proposer crashed"
        return result
    if tree.root in crashed:
        result.reason = "next leader crashed"
        return result

    states = {p: P.ProcessState(p, params, tree) for p in range(n) if p not in crashed}
    queue: list = []
    seq = 0

    def push(t, prio, payload):
        nonlocal seq
        heapq.heappush(queue, (t, prio, seq, payload))
        seq += 1

    def execute(pid, actions, now):
        for act in actions:
            if isinstance(act, P.Send):
                if act.dst in crashed:
                    continue
                d = message_delay(config, view, pid, act.dst, _KIND[type(act.msg)])
                push(now + d, 0, ("msg", pid, act.dst, act.msg))
                if log is not None:
                    log.append((view, now, pid, "send", f"{type(act.msg).__name__}->{act.dst}"))
            elif isinstance(act, P.SetTimer):
                push(now + act.delay, 1, ("timer", pid, act.name))
            elif isinstance(act, P.EmitQC):
                result.failed, result.qc, result.qc_time = False, act.qc, now
                if log is not None:
                    log.append((view, now, pid, "qc", str(len(act.qc.signers))))
            elif isinstance(act, P.ViewFailed):
                result.failed, result.reason, result.qc_time = True, act.reason, now
                if log is not None:
                    log.append((view, now, pid, "fail", act.reason))

    execute(proposer, states[proposer].on_commit_propose(block), 0)
    while queue:
        now, _, _, ev = heapq.heappop(queue)
        if ev[0] == "msg":
            _, src, dst, msg = ev
            if log is not None:
                log.append((view, now, dst, "recv", f"{type(msg).__name__}<-{src}"))
            execute(dst, states[dst].handle(src, msg, now), now)
        else:
            _, pid, name = ev
            if log is not None:
                log.append((view, now, pid, "timer", name))
            execute(pid, states[pid].on_timer(name, now), now)
        if states[tree.root].done:
            break

    if not states[tree.root].done and not result.reason:
        result.reason = "root never finalized"
    result.delivered = frozenset(p for p, s in states.items() if s.block is not None)
    result.signatures_made = {p: s.signatures_made for p, s in states.items()}
    return result


@dataclass
class RunMetrics:
    config: SimConfig
    results: list

    @property
    def successful(self) -> list:
        return [r for r in self.results if not r.failed]

    @property
    def mean_inclusion(self) -> float:
        ok = self.successful
        return sum(r.included_correct for r in ok) / len(ok) if ok else 0.0

    @property
    def mean_included(self) -> float:
        ok = self.successful
        return sum(r.included for r in ok) / len(ok) if ok else 0.0

    @property
    def failed_fraction(self) -> float:
        return sum(r.failed for r in self.results) / len(self.results) if self.results else 0.0

    def latency_histogram(self) -> dict:
        """Successful views bucketed by QC latency, rounded up to whole Δ."""
        c = Counter(math.ceil(r.qc_time / self.config.delta) for r in self.successful)
        return {str(k): c[k] for k in sorted(c)}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["view", "included", "latency_ticks", "failed"])
        for r in self.results:
            w.writerow([r.view, r.included, "" if r.failed else r.qc_time, int(r.failed)])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "views": len(self.results),
            "failed_views": sum(r.failed for r in self.results),
            "failed_fraction": round(self.failed_fraction, 6),
            "mean_correct_inclusion": round(self.mean_inclusion, 6),
            "mean_included_votes": round(self.mean_included, 6),
            "latency_histogram_delta": self.latency_histogram(),
            "crashed": sorted(self.config.crashed()),
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True, indent=2) + "\n"

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["view", "time", "process", "event", "detail"])
        for r in self.results:
            w.writerows(r.trace)
        return buf.getvalue()


def run(config: SimConfig, trace: bool = False) -> RunMetrics:
    crashed = config.crashed()
    results = []
    qc, height = None, 1
    for view in range(config.views):
        r = simulate_view(config, view, crashed, parent_qc=qc, height=height, trace=trace)
        results.append(r)
        if not r.failed:
            qc, height = r.qc, height + 1
    return RunMetrics(config, results)


def run_no2c(config: SimConfig, trace: bool = False) -> RunMetrics:
    return run(replace(config, second_chance=False), trace=trace)


def config_dict(config: SimConfig) -> dict:
    d = asdict(config)
    d["f"] = str(config.f)
    d["crash_set"] = list(config.crash_set) if config.crash_set is not None else None
    return d
