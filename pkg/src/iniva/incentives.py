"""Two-player reward game: does any deviation beat honest play?

The attacker controls ``round(m*n)`` processes, the honest player the
rest.  A strategy ``S(e_l, e_v, e_a, e_p)`` bundles four deviations, each
scaled by ``n`` to a process count:

* ``e_l``: as tree root, leave out this many of the honest player's votes
  (whole honest subtrees, or honest 2nd-chance singles);
* ``e_v``: when not holding the root, this many attacker processes skip
  voting;
* ``e_a``: this many attacker leaves bypass their parent and answer the
  2nd-chance request instead;
* ``e_p``: attacker internals skip aggregating this many honest leaves.

Utilities are exact rewards (``rewards.group_reward`` over the decoded QC),
averaged over random seatings.  Every profile is compared with honest play
on the same seatings.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product

import numpy as np

from .rewards import DecodedQC, Mode, NoQuorum, RewardParams, as_fraction, group_reward, tally

# slot modes
ABSENT, TREE, SECOND = 0, 1, 2
_MODES = {ABSENT: Mode.ABSENT, TREE: Mode.TREE, SECOND: Mode.SECOND_CHANCE}


def threshold_vote_omission(m, f) -> Fraction:
    """Leader bonus above which omitting honest votes does not pay."""
    m, f = as_fraction(m), as_fraction(f)
    if not 0 <= m < 1 or not 0 < f <= Fraction(1, 3):
        raise ValueError("need 0 <= m < 1 and 0 < f <= 1/3")
    return m * f / (1 - m + m * f)


def threshold_vote_denial(m, f, b_a) -> Fraction:
    """Leader bonus below which withholding votes does not pay."""
    m, f, b_a = as_fraction(m), as_fraction(f), as_fraction(b_a)
    if not 0 <= m < 1 or not 0 < f <= Fraction(1, 3):
        raise ValueError("need 0 <= m < 1 and 0 < f <= 1/3")
    if not b_a < 1 - m:
        raise ValueError("need b_a < 1 - m")
    return f * (1 - b_a - m) / (m + f - m * f)


def aggregation_conditions_hold(m) -> bool:
    """Skipping aggregation work loses ``b_a`` and regains at most ``2*m*b_a``."""
    return as_fraction(m) < Fraction(1, 2)


@dataclass(frozen=True)
class StrategyProfile:
    e_l: Fraction = Fraction(0)
    e_v: Fraction = Fraction(0)
    e_a: Fraction = Fraction(0)
    e_p: Fraction = Fraction(0)

    def __post_init__(self):
        for name in ("e_l", "e_v", "e_a", "e_p"):
            v = as_fraction(getattr(self, name))
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
            object.__setattr__(self, name, v)

    @property
    def honest(self) -> bool:
        return not (self.e_l or self.e_v or self.e_a or self.e_p)

    def counts(self, n: int) -> tuple[int, int, int, int]:
        return tuple(math.floor(x * n) for x in (self.e_l, self.e_v, self.e_a, self.e_p))

    def label(self) -> str:
        return "S(" + ",".join(str(x) for x in (self.e_l, self.e_v, self.e_a, self.e_p)) + ")"


S0 = StrategyProfile()


@dataclass(frozen=True)
class GameParams:
    m: Fraction = Fraction(1, 3)
    f: Fraction = Fraction(1, 3)
    b_l: Fraction = Fraction(15, 100)
    b_a: Fraction = Fraction(2, 100)
    n: int = 111
    fanout: int = 10
    R: Fraction = Fraction(1)
    trials: int = 2000
    seed: int = 0

    def __post_init__(self):
        for name in ("m", "f", "b_l", "b_a", "R"):
            object.__setattr__(self, name, as_fraction(getattr(self, name)))
        if not 0 <= self.m < Fraction(1, 2):
            raise ValueError("the attacker must control m < 1/2 of the processes")
        if self.n < 1 + self.fanout:
            raise ValueError("n too small for the fan-out")
        self.rewards  # validates b_l, b_a, f

    @property
    def rewards(self) -> RewardParams:
        return RewardParams(self.R, self.b_l, self.b_a, self.n, self.f)

    @property
    def attackers(self) -> int:
        return round(self.m * self.n)

    def check(self, s: StrategyProfile) -> None:
        if s.e_l > self.f:
            raise ValueError("e_l <= f is needed to form a valid block")
        for name in ("e_v", "e_a", "e_p"):
            if getattr(s, name) > self.m:
                raise ValueError(f"{name} cannot exceed the attacker's share m")


@dataclass(frozen=True)
class Seating:
    """One random round: attacker flags per tree slot.

    Slot 0 is the root, slots ``1..F`` internals, leaf slot ``j`` hangs
    below internal ``1 + (j - F - 1) % F``.
    """

    attacker: np.ndarray
    fanout: int
    order: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return len(self.attacker)


def _kids(n: int, F: int) -> list[list[int]]:
    kids = [[] for _ in range(F + 1)]
    for j in range(F + 1, n):
        kids[1 + (j - F - 1) % F].append(j)
    return kids


def play(s: StrategyProfile, seat: Seating, params: GameParams) -> tuple[list[int], list[int]]:
    """Slot modes and per-internal aggregation counts after the attacker plays ``s``."""
    n, F = seat.n, seat.fanout
    att = seat.attacker
    kids = _kids(n, F)
    parent = [0] * n
    for i in range(1, F + 1):
        for k in kids[i]:
            parent[k] = i
    mode = [TREE] * n
    agg = [0] + [len(kids[i]) for i in range(1, F + 1)]
    l_cnt, v_cnt, a_cnt, p_cnt = s.counts(n)
    # a fixed per-seating order decides which processes deviate first
    order = [int(x) for x in seat.order]

    def drop_child(k):
        if parent[k] and mode[parent[k]] == TREE and mode[k] == TREE:
            agg[parent[k]] -= 1

    if v_cnt and not att[0]:
        chosen = [p for p in order if p and att[p]][:v_cnt]
        for p in chosen:
            drop_child(p)
            mode[p] = ABSENT
            if 1 <= p <= F:
                agg[p] = 0
                for k in kids[p]:
                    if mode[k] == TREE:
                        mode[k] = SECOND

    if a_cnt:
        leaves = [p for p in order if p > F and att[p] and mode[p] == TREE][:a_cnt]
        for p in leaves:
            drop_child(p)
            mode[p] = SECOND

    if p_cnt:
        skipped = [p for p in order if p > F and not att[p] and att[parent[p]]
                   and mode[parent[p]] == TREE and mode[p] == TREE][:p_cnt]
        for p in skipped:
            drop_child(p)
            mode[p] = SECOND

    if l_cnt and att[0]:
        q = params.rewards.quorum
        included = sum(1 for x in mode if x != ABSENT)
        budget = l_cnt
        # honest 2nd-chance singles first, they cost nothing to drop
        for p in order:
            if budget and p and not att[p] and mode[p] == SECOND and included > q:
                mode[p] = ABSENT
                budget -= 1
                included -= 1
        for i in [p for p in order if 1 <= p <= F and not att[p] and mode[p] == TREE]:
            members = [i] + [k for k in kids[i] if mode[k] == TREE]
            honest = [p for p in members if not att[p]]
            if len(honest) > budget or included - len(honest) < q:
                continue
            for p in members:
                mode[p] = ABSENT if not att[p] else SECOND
            agg[i] = 0
            budget -= len(honest)
            included -= len(honest)

    # an internal left without aggregated children reads as a 2nd-chance single
    for i in range(1, F + 1):
        if mode[i] == TREE and agg[i] == 0:
            mode[i] = SECOND
        if mode[i] != TREE:
            agg[i] = 0
    agg[0] = sum(1 for i in range(1, F + 1) if mode[i] == TREE)
    return mode, agg


def decoded(mode: list[int], agg: list[int], fanout: int) -> DecodedQC:
    """Slot-level outcome as a DecodedQC over ids equal to slot numbers."""
    modes = {p: _MODES[x] for p, x in enumerate(mode)}
    counts = {p: agg[p] for p in range(fanout + 1) if p == 0 or mode[p] == TREE}
    return DecodedQC(len(mode), 0, modes, counts)


def seatings(params: GameParams):
    """Deterministic stream of seatings for ``params.seed``."""
    rng = np.random.default_rng(np.random.SeedSequence(params.seed))
    n, a = params.n, params.attackers
    for _ in range(params.trials):
        att = np.zeros(n, dtype=bool)
        att[rng.choice(n, size=a, replace=False)] = True
        yield Seating(att, params.fanout, rng.permutation(n))


def attacker_payoff(s: StrategyProfile, seat: Seating, params: GameParams) -> Fraction:
    mode, agg = play(s, seat, params)
    group = np.flatnonzero(seat.attacker).tolist()
    try:
        return group_reward(tally(decoded(mode, agg, seat.fanout), group), params.rewards)
    except NoQuorum:
        return Fraction(0)


@dataclass(frozen=True)
class Utility:
    profile: StrategyProfile
    attacker: float
    honest: float
    trials: int


def evaluate_utility(s: StrategyProfile, params: GameParams) -> Utility:
    """Expected per-round payoff of both players when the attacker plays ``s``."""
    params.check(s)
    att_total = Fraction(0)
    hon_total = Fraction(0)
    for seat in seatings(params):
        mode, agg = play(s, seat, params)
        dq = decoded(mode, agg, seat.fanout)
        group = np.flatnonzero(seat.attacker).tolist()
        try:
            a = group_reward(tally(dq, group), params.rewards)
            h = params.R - a
        except NoQuorum:
            a = h = Fraction(0)
        att_total += a
        hon_total += h
    t = params.trials
    return Utility(s, float(att_total / t), float(hon_total / t), t)


@dataclass(frozen=True)
class Comparison:
    profile: StrategyProfile
    advantage: float
    stderr: float

    @property
    def dominated(self) -> bool:
        # within three standard errors of no gain counts as no gain
        return self.advantage <= 3 * self.stderr


def compare(s: StrategyProfile, params: GameParams) -> Comparison:
    """Attacker gain of ``s`` over honest play on common seatings (in units of R)."""
    params.check(s)
    diffs = np.array([float(attacker_payoff(s, seat, params) - attacker_payoff(S0, seat, params))
                      for seat in seatings(params)])
    if s.honest or len(diffs) < 2:
        return Comparison(s, float(diffs.mean()) if len(diffs) else 0.0, 0.0)
    return Comparison(s, float(diffs.mean()), float(diffs.std(ddof=1) / math.sqrt(len(diffs))))


def strategy_grid(params: GameParams, steps: int = 5) -> list[StrategyProfile]:
    """``steps`` evenly spaced values per parameter: e_l over [0, f], the rest over [0, m]."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    frac = [Fraction(i, steps - 1) if steps > 1 else Fraction(0) for i in range(steps)]
    return [StrategyProfile(l * params.f, v * params.m, a * params.m, p * params.m)
            for l, v, a, p in product(frac, repeat=4)]


@dataclass(frozen=True)
class DominanceReport:
    params: GameParams
    rows: tuple[Comparison, ...]

    @property
    def dominated_fraction(self) -> float:
        return sum(r.dominated for r in self.rows) / len(self.rows) if self.rows else 1.0

    @property
    def all_dominated(self) -> bool:
        return all(r.dominated for r in self.rows)

    @property
    def max_advantage(self) -> Comparison | None:
        return max(self.rows, key=lambda r: r.advantage, default=None)


def dominance_report(params: GameParams, grid=None) -> DominanceReport:
    """Compare every profile in ``grid`` (default: 5 steps per parameter) with honest play.

    All profiles share one pass over the seatings, so the cost is one
    seating draw per trial plus one play per profile.
    """
    grid = list(strategy_grid(params) if grid is None else grid)
    for s in grid:
        params.check(s)
    sums = np.zeros(len(grid))
    sq = np.zeros(len(grid))
    for seat in seatings(params):
        base = attacker_payoff(S0, seat, params)
        d = np.array([0.0 if s.honest else float(attacker_payoff(s, seat, params) - base) for s in grid])
        sums += d
        sq += d * d
    t = params.trials
    rows = []
    for s, total, total_sq in zip(grid, sums, sq):
        mean = total / t
        var = max(total_sq / t - mean * mean, 0.0) * t / max(t - 1, 1)
        rows.append(Comparison(s, float(mean), float(math.sqrt(var / t))))
    return DominanceReport(params, tuple(rows))


@dataclass(frozen=True)
class ConditionRow:
    condition: str
    threshold: str
    value: str
    holds: bool
    margin: float
    stderr: float

    def row(self) -> dict:
        return {"condition": self.condition, "threshold": self.threshold, "value": self.value,
                "holds": int(self.holds), "empirical_margin": f"{self.margin:.8f}",
                "stderr": f"{self.stderr:.8f}"}


def condition_report(params: GameParams) -> list[ConditionRow]:
    """Closed-form verdict per deviation next to the exact empirical margin.

    The margin is honest utility minus deviating utility; positive means
    the deviation loses.
    """
    m, f = params.m, params.f
    rows = []
    t_om = threshold_vote_omission(m, f)
    c = compare(StrategyProfile(e_l=f), params)
    rows.append(ConditionRow("vote_omission", f"b_l > {t_om}", str(params.b_l), params.b_l > t_om,
                             -c.advantage, c.stderr))
    t_den = threshold_vote_denial(m, f, params.b_a)
    c = compare(StrategyProfile(e_v=m), params)
    rows.append(ConditionRow("vote_denial", f"b_l < {t_den}", str(params.b_l), params.b_l < t_den,
                             -c.advantage, c.stderr))
    agg_ok = aggregation_conditions_hold(m)
    c = compare(StrategyProfile(e_a=m), params)
    rows.append(ConditionRow("aggregation_denial", "m < 1/2", str(m), agg_ok, -c.advantage, c.stderr))
    c = compare(StrategyProfile(e_p=m), params)
    rows.append(ConditionRow("aggregation_omission", "m < 1/2", str(m), agg_ok, -c.advantage, c.stderr))
    return rows
