"""Targeted vote omission against Iniva and a round-robin star baseline.

An attacker controls each process independently with probability ``m``
and picks one correct victim.  It wants the victim's vote out of the QC
while excluding as few other correct processes (the collateral) as
possible.  Attackers only withhold: they never sign twice or send
conflicting aggregates.

For a concrete tree the cheapest attack follows from a handful of cases:

* a correct root includes everybody, so the attack needs the root;
* a leaf below an attacker parent, or an internal whose block only ever
  came from an attacker proposer, can be dropped on its own;
* a leaf below a correct parent that was kept away from the block costs
  that parent as well;
* otherwise the root has to drop the victim's whole branch, costing every
  other correct process in it.

An attack that leaves fewer than a quorum of signatures fails outright.
"""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..overlay import TreeConfig
from ..rewards import DEFAULT_F, quorum_size

INF = math.inf


@dataclass(frozen=True)
class AttackOutcome:
    success: bool
    min_collateral: float
    excluded: frozenset = frozenset()
    victim: Optional[int] = None

    def __post_init__(self):
        if self.success and self.min_collateral == INF:
            raise ValueError("a successful attack has finite collateral")


def affordable(cost, c):
    """Whether an attack of minimum collateral ``cost`` fits a budget ``c``; ``inf`` cost never does."""
    return np.isfinite(cost) & (cost <= c)


def outcome(collateral: float, c: float, excluded=frozenset(), victim=None) -> AttackOutcome:
    ok = bool(affordable(collateral, c))
    return AttackOutcome(ok, collateral, frozenset(excluded) if ok else frozenset(), victim)


def star_min_collateral(leader: int, attackers) -> float:
    """The star leader collects every vote directly; only it can drop one."""
    return 0 if leader in attackers else INF


def star_trial(n: int, m: float, rng: np.random.Generator, c: float = 0) -> AttackOutcome:
    attackers, victim = sample_attackers(n, m, rng)
    leader = int(rng.integers(n))
    return outcome(star_min_collateral(leader, attackers), c, {victim}, victim)


def sample_attackers(n: int, m: float, rng: np.random.Generator) -> tuple[frozenset, int]:
    """Bernoulli(m) attackers and a uniform correct victim (resampled if none is correct)."""
    while True:
        mask = rng.random(n) < m
        if not mask.all():
            break
    attackers = frozenset(np.flatnonzero(mask).tolist())
    correct = np.flatnonzero(~mask)
    return attackers, int(correct[rng.integers(len(correct))])


def iniva_plan(tree: TreeConfig, attackers, victim: int, proposer: int,
               f=DEFAULT_F) -> tuple[str, frozenset]:
    """Cheapest way to drop ``victim`` as (case, excluded correct processes).

    Cases: ``"leaf_parent"`` (attacker parent drops the leaf),
    ``"internal_unreached"`` (internal never gets the block),
    ``"parent_unreached"`` (the leaf's correct parent never gets it),
    ``"branch"`` (the root drops the whole branch) and ``"none"``.
    """
    attackers = frozenset(attackers)
    if victim in attackers:
        raise ValueError("victim must be correct")
    if tree.root not in attackers:
        return "none", frozenset()

    options: list[tuple[str, frozenset]] = []
    if victim in tree.internals:
        branch = tree.branch(victim)
        if proposer in attackers:
            options.append(("internal_unreached", frozenset({victim})))
    else:
        parent = tree.parent(victim)
        branch = tree.branch(parent)
        if parent in attackers:
            options.append(("leaf_parent", frozenset({victim})))
        elif proposer in attackers:
            options.append(("parent_unreached", frozenset({victim, parent})))
    options.append(("branch", frozenset(p for p in branch if p not in attackers)))

    case, best = min(options, key=lambda o: len(o[1]))
    if tree.n - len(best) < quorum_size(tree.n, f):
        return "none", frozenset()
    return case, best


def iniva_attack(tree: TreeConfig, attackers, victim: int, proposer: int,
                 f=DEFAULT_F) -> tuple[float, frozenset]:
    """Cheapest omission of ``victim``: (collateral, excluded correct processes)."""
    case, excluded = iniva_plan(tree, attackers, victim, proposer, f)
    if case == "none":
        return INF, frozenset()
    return len(excluded) - 1, excluded


def iniva_min_collateral(tree: TreeConfig, attackers, victim: int, proposer: int, f=DEFAULT_F) -> float:
    return iniva_attack(tree, attackers, victim, proposer, f)[0]


def iniva_trial(n: int, fanout: int, m: float, rng: np.random.Generator, c: float = 0,
                f=DEFAULT_F) -> AttackOutcome:
    """One random view: attackers, victim, proposer and a freshly shuffled tree."""
    from ..overlay import RoundSeed, tree_for_view

    attackers, victim = sample_attackers(n, m, rng)
    view = int(rng.integers(n))
    tree = tree_for_view(RoundSeed(rng.bytes(32), view), n, fanout)
    collateral, excluded = iniva_attack(tree, attackers, victim, view % n, f)
    return outcome(collateral, c, excluded, victim)


# Vectorized sweeps.  Attackers are i.i.d. per process and the shuffle is
# uniform, so sampling attacker status per tree slot is the same
# distribution as sampling per process id and then shuffling.  Slot 0 is
# the root, slots 1..F the internals, leaf slot j belongs to internal
# 1 + (j - F - 1) % F.  The proposer sits in a uniform non-root slot.

@dataclass(frozen=True)
class SlotLayout:
    n: int
    fanout: int
    parent: np.ndarray = field(repr=False)
    branch_of: np.ndarray = field(repr=False)

    @classmethod
    def make(cls, n: int, fanout: int) -> SlotLayout:
        if n < 1 + fanout:
            raise ValueError(f"n={n} too small for fanout {fanout}")
        slots = np.arange(n)
        parent = np.where(slots > fanout, 1 + (slots - fanout - 1) % fanout, 0)
        parent[0] = -1
        # branch index (0..F-1) for every non-root slot
        branch_of = np.where(slots <= fanout, slots - 1, parent - 1)
        branch_of[0] = -1
        return cls(n, fanout, parent, branch_of)


def _sample_slots(n: int, m: float, size: int, rng: np.random.Generator):
    att = rng.random((size, n)) < m
    # rows with no correct process have no victim; callers drop them
    keys = np.where(att, -1.0, rng.random((size, n)))
    victim = keys.argmax(axis=1)
    has_victim = ~att.all(axis=1)
    proposer = rng.integers(1, n, size=size)
    return att, victim, proposer, has_victim


def iniva_collateral_batch(layout: SlotLayout, att: np.ndarray, victim: np.ndarray,
                           proposer: np.ndarray, f=DEFAULT_F) -> np.ndarray:
    """Minimal collateral per row (``inf`` where the attack cannot work)."""
    n, F = layout.n, layout.fanout
    rows = np.arange(att.shape[0])
    correct = ~att
    # correct members per branch: internal plus its leaves
    per_branch = np.zeros((att.shape[0], F), dtype=np.int64)
    np.add.at(per_branch.T, layout.branch_of[1:], correct[:, 1:].T)

    root_att = att[:, 0]
    is_leaf = victim > F
    is_internal = (victim >= 1) & ~is_leaf
    parent_att = att[rows, np.maximum(layout.parent[victim], 0)]
    prop_att = att[rows, proposer]
    branch_cost = per_branch[rows, np.maximum(layout.branch_of[victim], 0)] - 1

    cost = branch_cost.astype(float)
    cost = np.where(is_leaf & ~parent_att & prop_att, np.minimum(cost, 1), cost)
    zero = (is_leaf & parent_att) | (is_internal & prop_att)
    cost = np.where(zero, 0.0, cost)
    cost = np.where(root_att & (victim != 0), cost, INF)
    cost = np.where(n - (cost + 1) >= quorum_size(n, f), cost, INF)
    return cost


def star_collateral_batch(n: int, att: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    leader = rng.integers(n, size=att.shape[0])
    return np.where(att[np.arange(att.shape[0]), leader], 0.0, INF)


@dataclass(frozen=True)
class SweepPoint:
    protocol: str
    n: int
    fanout: int
    m: float
    c: float
    trials: int
    successes: int
    k: Optional[int] = None
    free: float = 0.0
    greedy: bool = False

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials if self.trials else 0.0

    @property
    def stderr(self) -> float:
        p = self.success_rate
        return math.sqrt(p * (1 - p) / self.trials) if self.trials else 0.0

    def row(self) -> dict:
        return {
            "protocol": self.protocol, "n": self.n, "fanout": self.fanout, "m": self.m,
            "c": self.c, "k": "" if self.k is None else self.k, "free": self.free,
            "greedy": int(self.greedy), "trials": self.trials,
            "success_rate": f"{self.success_rate:.6f}", "stderr": f"{self.stderr:.6f}",
        }


CHUNK = 50_000


def _chunk_rng(seed: int, tag: int, chunk: int) -> np.random.Generator:
    # one stream per (seed, sweep point, chunk): results do not depend on worker count
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(tag, chunk)))


def _stable_tag(*parts) -> int:
    return zlib.crc32(":".join(repr(p) for p in parts).encode())


def collateral_samples(protocol: str, n: int, fanout: int, m: float, trials: int, seed: int = 0,
                       f=DEFAULT_F) -> np.ndarray:
    """Minimal collateral for ``trials`` independent views (``inf`` = impossible).

    Views with no correct process at all are redrawn, matching ``star_trial``
    and ``iniva_trial``.
    """
    if protocol not in ("iniva", "star"):
        raise ValueError(f"unknown protocol {protocol!r}")
    layout = SlotLayout.make(n, fanout) if protocol == "iniva" else None
    # m is left out so that every m thresholds the same uniforms (coupled sampling)
    tag = _stable_tag(protocol, n, fanout)
    out, have, chunk = [], 0, 0
    while have < trials:
        rng = _chunk_rng(seed, tag, chunk)
        att, victim, proposer, ok = _sample_slots(n, m, min(CHUNK, trials - have), rng)
        if layout is not None:
            cost = iniva_collateral_batch(layout, att, victim, proposer, f)
        else:
            cost = star_collateral_batch(n, att, rng)
        out.append(cost[ok])
        have += int(ok.sum())
        chunk += 1
    return np.concatenate(out)[:trials]


def sweep(protocol: str, n: int, fanout: int, m_values, c_values, trials: int, seed: int = 0,
          f=DEFAULT_F) -> list[SweepPoint]:
    """Success rate for every (m, c); all c for one m share the same trials."""
    points = []
    for m in m_values:
        cost = collateral_samples(protocol, n, fanout, m, trials, seed, f)
        for c in c_values:
            points.append(SweepPoint(protocol, n, fanout, float(m), float(c), trials,
                                     int(np.count_nonzero(affordable(cost, c)))))
    return points
