"""What a targeted attack costs the victim and the attackers in block rewards.

Each trial draws a committee with exactly ``round(m*n)`` attackers, a
correct victim, a view and a tree, builds the QC the attackers would
produce, and prices it with the reward scheme.  The same trial without
the attack gives the paired baseline, so attacker losses are measured
with common random numbers.

Attacks:

* ``omission``: when they can, attackers drop the victim's vote while
  excluding at most ``collateral`` other correct processes.
* ``denial``: when the victim assembles the QC, attackers that are not
  the leader withhold their votes to shrink its leader bonus.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from fractions import Fraction

import numpy as np

from ..overlay import RoundSeed, TreeConfig, leader_of, tree_for_view
from ..rewards import DecodedQC, Mode, NoQuorum, RewardParams, Tally, group_reward, tally
from .omission import iniva_plan

ATTACKS = ("omission", "denial")
PROTOCOLS = ("iniva", "star")


@dataclass(frozen=True)
class RewardLossConfig:
    protocol: str = "iniva"
    n: int = 111
    fanout: int = 10
    m: float = 0.3
    attack: str = "omission"
    collateral: float = 0
    params: RewardParams = field(default_factory=RewardParams)
    trials: int = 20_000
    seed: int = 0

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"protocol must be one of {PROTOCOLS}")
        if self.attack not in ATTACKS:
            raise ValueError(f"attack must be one of {ATTACKS}")
        if self.params.n != self.n:
            raise ValueError("params.n must equal n")
        if not 0 <= self.m < 1:
            raise ValueError("m must lie in [0, 1)")
        if self.collateral < 0:
            raise ValueError("collateral must be >= 0")

    @property
    def attacker_count(self) -> int:
        return round(self.m * self.n)


@dataclass(frozen=True)
class RewardLoss:
    config: RewardLossConfig
    victim_share: float
    attacker_share: float
    victim_share_honest: float
    attacker_share_honest: float
    attack_rate: float

    @property
    def fair(self) -> float:
        return float(self.config.params.R) / self.config.n

    @property
    def victim_delta(self) -> float:
        """Change of the victim's expected reward, relative to its fair share ``R/n``."""
        return (self.victim_share - self.victim_share_honest) / self.fair

    @property
    def attacker_delta(self) -> float:
        """Change of one attacker's expected reward, relative to ``R/n``."""
        if not self.config.attacker_count:
            return 0.0
        return (self.attacker_share - self.attacker_share_honest) / (self.config.attacker_count * self.fair)

    @property
    def attacker_loss(self) -> float:
        """Expected reward the coalition gives up per block, as a fraction of ``R``."""
        return (self.attacker_share_honest - self.attacker_share) / float(self.config.params.R)

    @property
    def victim_loss(self) -> float:
        return (self.victim_share_honest - self.victim_share) / float(self.config.params.R)

    def row(self) -> dict:
        c = self.config
        return {
            "protocol": c.protocol, "n": c.n, "fanout": c.fanout if c.protocol == "iniva" else "",
            "m": c.m, "attack": c.attack, "collateral": c.collateral, "trials": c.trials,
            "attack_rate": f"{self.attack_rate:.6f}", "victim_delta": f"{self.victim_delta:.6f}",
            "attacker_delta": f"{self.attacker_delta:.6f}", "victim_loss": f"{self.victim_loss:.8f}",
            "attacker_loss": f"{self.attacker_loss:.8f}",
        }


def honest_qc(tree: TreeConfig) -> DecodedQC:
    modes = {p: Mode.TREE for p in tree.members()}
    counts = {i: len(tree.children(i)) for i in tree.internals}
    counts[tree.root] = len(tree.internals)
    return _finish(tree, modes, counts)


def _finish(tree: TreeConfig, modes: dict, counts: dict) -> DecodedQC:
    # an internal left with no aggregated child is indistinguishable from a 2nd-chance single
    for i in tree.internals:
        if modes[i] is Mode.TREE and counts.get(i, 0) == 0:
            modes[i] = Mode.SECOND_CHANCE
            counts.pop(i, None)
        elif modes[i] is not Mode.TREE:
            counts.pop(i, None)
    counts[tree.root] = sum(1 for i in tree.internals if modes[i] is Mode.TREE)
    return DecodedQC(tree.n, tree.root, modes, counts)


def omission_qc(tree: TreeConfig, attackers, case: str, excluded: frozenset, victim: int) -> DecodedQC:
    """The QC left after the attack ``case`` removes ``excluded``."""
    modes = {p: Mode.TREE for p in tree.members()}
    counts = {i: len(tree.children(i)) for i in tree.internals}
    if case == "leaf_parent":
        modes[victim] = Mode.ABSENT
        counts[tree.parent(victim)] -= 1
    elif case in ("internal_unreached", "parent_unreached"):
        cut = victim if case == "internal_unreached" else tree.parent(victim)
        modes[cut] = Mode.ABSENT
        for k in tree.children(cut):
            modes[k] = Mode.SECOND_CHANCE
        modes[victim] = Mode.ABSENT
    elif case == "branch":
        internal = victim if victim in tree.internals else tree.parent(victim)
        for p in tree.branch(internal):
            modes[p] = Mode.ABSENT if p in excluded else Mode.SECOND_CHANCE
    else:
        raise ValueError(f"unknown attack case {case!r}")
    return _finish(tree, modes, counts)


def denial_qc(tree: TreeConfig, attackers) -> DecodedQC:
    """Attacker non-roots withhold; a denying internal's children fall back to 2nd-chance."""
    modes = {p: Mode.TREE for p in tree.members()}
    counts = {}
    for i in tree.internals:
        kids = tree.children(i)
        if i in attackers:
            modes[i] = Mode.ABSENT
            for k in kids:
                modes[k] = Mode.ABSENT if k in attackers else Mode.SECOND_CHANCE
        else:
            for k in kids:
                if k in attackers:
                    modes[k] = Mode.ABSENT
            counts[i] = sum(1 for k in kids if k not in attackers)
    return _finish(tree, modes, counts)


def star_qc(n: int, leader: int, absent) -> DecodedQC:
    modes = {p: (Mode.ABSENT if p in absent else Mode.TREE) for p in range(n)}
    return DecodedQC(n, leader, modes, {leader: 0})


@lru_cache(maxsize=None)
def _price_tally(t: Tally, params: RewardParams) -> Fraction:
    try:
        return group_reward(t, params)
    except NoQuorum:
        # no block, no reward for anyone
        return Fraction(0)


def _price(decoded: DecodedQC, group, params: RewardParams) -> Fraction:
    return _price_tally(tally(decoded, group), params)


def reward_loss_experiment(cfg: RewardLossConfig) -> RewardLoss:
    n, params = cfg.n, cfg.params
    a = cfg.attacker_count
    sums = np.zeros(4)
    attacked = 0
    for t in range(cfg.trials):
        # one stream per trial: star and Iniva runs with the same seed see the
        # same attackers, victim and vote collector (common random numbers)
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(t,)))
        ids = rng.permutation(n)
        attackers = frozenset(ids[:a].tolist())
        victim = int(ids[a])
        view = int(rng.integers(n))
        if cfg.protocol == "star":
            # the star collector plays the part of the tree root, the next leader
            leader = leader_of(view + 1, n)
            base = star_qc(n, leader, ())
            qc = base
            if cfg.attack == "omission" and leader in attackers:
                qc = star_qc(n, leader, {victim})
            elif cfg.attack == "denial" and leader == victim and attackers:
                qc = star_qc(n, leader, attackers)
        else:
            tree = tree_for_view(RoundSeed(rng.bytes(32), view), n, cfg.fanout)
            base = honest_qc(tree)
            qc = base
            if cfg.attack == "omission":
                case, excluded = iniva_plan(tree, attackers, victim, leader_of(view, n), params.f)
                if case != "none" and len(excluded) - 1 <= cfg.collateral:
                    qc = omission_qc(tree, attackers, case, excluded, victim)
            elif tree.root == victim and attackers:
                qc = denial_qc(tree, attackers)
        honest = [float(_price(base, {victim}, params)), float(_price(base, attackers, params))]
        if qc is base:
            sums += honest + honest
        else:
            attacked += 1
            sums += [float(_price(qc, {victim}, params)), float(_price(qc, attackers, params))] + honest
    sums /= max(cfg.trials, 1)
    return RewardLoss(cfg, *sums.tolist(), attacked / max(cfg.trials, 1))


def star_params(params: RewardParams) -> RewardParams:
    """The star baseline keeps the leader bonus and drops the aggregation reward."""
    return RewardParams(params.R, params.b_l, Fraction(0), params.n, params.f)
