"""A synchronous gossip-aggregation model for targeted omission.

Every process starts with its own signature.  In each round every process
pushes one message to ``k`` distinct random peers: aggregators send the
union of everything they hold (aggregates with multiplicities merge
freely), free riders only ever send their own signature and never merge.
The leader is a uniform process and closes its certificate after
``ceil(log_{k+1} n) + 2`` rounds.

Attackers only deviate in views they lead.  Then they pool every aggregate
that does not contain the victim, never forward anything that does, and
the attacking leader certifies the pool if it reaches a quorum.  An honest
leader certifies what it has gathered, so the victim can also be missed
without any attack when gossip is unlucky.

Signer sets are Python ints used as bitsets.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..rewards import DEFAULT_F, quorum_size
from .omission import INF, AttackOutcome, _chunk_rng, _stable_tag, sample_attackers


@dataclass(frozen=True)
class GossipConfig:
    n: int = 111
    k: int = 2
    m: float = 0.05
    free_rider_fraction: float = 0.0
    greedy: bool = False
    rounds: int | None = None
    f: object = DEFAULT_F

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 1 <= self.k < self.n:
            raise ValueError("k must be below n")
        if not 0 <= self.free_rider_fraction <= 1:
            raise ValueError("free_rider_fraction must lie in [0, 1]")

    @property
    def round_count(self) -> int:
        if self.rounds is not None:
            return self.rounds
        return full_propagation_rounds(self.n, self.k)


def full_propagation_rounds(n: int, k: int) -> int:
    # integer search avoids float log rounding at exact powers
    r, reach = 0, 1
    while reach < n:
        reach *= k + 1
        r += 1
    return r + 2


def _peers(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """``k`` distinct peers per sender, never the sender itself."""
    keys = rng.random((n, n - 1))
    picks = np.argpartition(keys, k - 1, axis=1)[:, :k] if k < n - 1 else np.tile(np.arange(n - 1), (n, 1))
    return picks + (picks >= np.arange(n)[:, None])


def gosig_view(cfg: GossipConfig, rng: np.random.Generator) -> AttackOutcome:
    n, k = cfg.n, cfg.k
    attackers, victim = sample_attackers(n, cfg.m, rng)
    leader = int(rng.integers(n))
    draws = rng.random(n)
    free = {p for p in range(n)
            if draws[p] < cfg.free_rider_fraction and p not in attackers and p != victim and p != leader}
    attacking = leader in attackers
    hostile = attackers if attacking else frozenset()

    vbit = 1 << victim
    held = [1 << p for p in range(n)]
    pool = 0
    for a in attackers:
        pool |= 1 << a
    att_list = sorted(attackers)

    for r in range(cfg.round_count):
        peers = _peers(n, k, rng)
        if cfg.greedy and attacking and r == 0 and att_list:
            # attackers reach out to the victim first and collect its bare signature
            take = min(k, len(att_list))
            peers[victim, :take] = rng.choice(att_list, size=take, replace=False)
        outgoing = [pool if p in hostile else (1 << p if p in free else held[p]) for p in range(n)]
        for p in range(n):
            msg = outgoing[p]
            for d in peers[p]:
                d = int(d)
                if d in hostile:
                    if not msg & vbit:
                        pool |= msg
                elif d not in free:
                    held[d] |= msg

    q = quorum_size(n, cfg.f)
    correct_mask = ((1 << n) - 1) & ~pool_of(attackers)
    if attacking:
        qc = pool if bin(pool).count("1") >= q else 0
    else:
        qc = held[leader]
    if not qc or qc & vbit:
        return AttackOutcome(False, INF, frozenset(), victim)
    missing = correct_mask & ~qc & ~vbit
    excluded = frozenset(p for p in range(n) if missing >> p & 1) | {victim}
    return AttackOutcome(True, len(excluded) - 1, excluded, victim)


def pool_of(members) -> int:
    bits = 0
    for p in members:
        bits |= 1 << p
    return bits


def gosig_trial(n: int, m: float, k: int, free_rider_fraction: float, greedy: bool,
                rng: np.random.Generator, c: float = 0) -> AttackOutcome:
    out = gosig_view(GossipConfig(n, k, m, free_rider_fraction, greedy), rng)
    if out.success and out.min_collateral <= c:
        return out
    return AttackOutcome(False, out.min_collateral, frozenset(), out.victim)


def gosig_collateral_samples(cfg: GossipConfig, trials: int, seed: int = 0) -> np.ndarray:
    """Collateral of the victim's exclusion per view (``inf`` when it was included)."""

    tag = _stable_tag("gosig", cfg.n, cfg.k, cfg.m, cfg.free_rider_fraction, cfg.greedy)
    out = np.empty(trials)
    # one generator per trial keeps results independent of how trials are split
    for t in range(trials):
        out[t] = gosig_view(cfg, _chunk_rng(seed, tag, t)).min_collateral
    return out
