"""Role decoding from QC multiplicities and the exact block-reward split.

Every amount is a ``Fraction``.  Each included voter earns ``b_v*R/n``;
internals earn ``b_a*R/n`` per aggregated child and the root the same per
aggregated subtree; the root earns ``b_l*R/(f*n)`` per signature above the
quorum (capped at ``b_l*R``); a non-root process included through a
2nd-chance reply pays ``b_a*R/n``.  Whatever is left of ``R`` after that is
split evenly over the whole committee, so the block always pays out exactly
``R``.
"""
from __future__ import annotations

import csv
import enum
import io
import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from fractions import Fraction

from .overlay import Role, TreeConfig
from .sigagg import MultiplicityVector

DEFAULT_F = Fraction(1, 3)


class InvalidMultiplicities(ValueError):
    """The QC's multiplicities do not fit the tree; the leader is faulty."""


class NoQuorum(ValueError):
    pass


class Mode(enum.Enum):
    TREE = "tree"
    SECOND_CHANCE = "second_chance"
    ABSENT = "absent"


def quorum_size(n: int, f: Fraction = DEFAULT_F) -> int:
    return math.ceil((1 - Fraction(f)) * n)


def as_fraction(x) -> Fraction:
    # decimal strings and floats like 0.02 should mean exactly 2/100
    if isinstance(x, float):
        return Fraction(repr(x))
    return Fraction(x)


@dataclass(frozen=True)
class RewardParams:
    R: Fraction = Fraction(1)
    b_l: Fraction = Fraction(15, 100)
    b_a: Fraction = Fraction(2, 100)
    n: int = 111
    f: Fraction = DEFAULT_F

    def __post_init__(self):
        for name in ("R", "b_l", "b_a", "f"):
            object.__setattr__(self, name, as_fraction(getattr(self, name)))
        if not (0 <= self.b_l < 1 and 0 <= self.b_a < 1):
            raise ValueError("b_l and b_a must lie in [0, 1)")
        if self.b_l + self.b_a >= 1:
            raise ValueError("b_l + b_a must be < 1")
        if self.b_a > self.b_v:
            raise ValueError("punishment b_a may not exceed the voting share b_v")
        if not 0 < self.f < Fraction(1, 2):
            raise ValueError("f must lie in (0, 1/2)")
        if self.n < 1 or self.R < 0:
            raise ValueError("need n >= 1 and R >= 0")

    @property
    def b_v(self) -> Fraction:
        return 1 - self.b_l - self.b_a

    @property
    def quorum(self) -> int:
        return quorum_size(self.n, self.f)

    @property
    def vote_unit(self) -> Fraction:
        return self.b_v * self.R / self.n

    @property
    def agg_unit(self) -> Fraction:
        return self.b_a * self.R / self.n

    @property
    def leader_unit(self) -> Fraction:
        return self.b_l * self.R / (self.f * self.n)


@dataclass(frozen=True)
class DecodedQC:
    n: int
    root: int
    modes: Mapping[int, Mode]
    # aggregated children per internal, aggregated subtrees for the root
    agg_counts: Mapping[int, int]
    valid: bool = True
    errors: tuple[str, ...] = ()

    @property
    def included(self) -> frozenset[int]:
        return frozenset(p for p, m in self.modes.items() if m is not Mode.ABSENT)

    def mode(self, p: int) -> Mode:
        return self.modes[p]


def decode_roles(qc, tree: TreeConfig, strict: bool = True) -> DecodedQC:
    """Recover inclusion modes and aggregation counts from multiplicities.

    ``qc`` may be a QuorumCertificate, an aggregate or a bare multiplicity
    mapping.  Raises ``InvalidMultiplicities`` on any pattern the protocol
    cannot produce, unless ``strict`` is false, in which case the result is
    flagged invalid.
    """
    mv = _multiplicities(qc)
    errors: list[str] = []
    members = set(tree.members())
    for s in mv:
        if s not in members:
            errors.append(f"signer {s} is not in the committee")

    modes: dict[int, Mode] = {}
    counts: dict[int, int] = {}
    mu_root = mv.get(tree.root, 0)
    if mu_root != 1:
        errors.append(f"root {tree.root} has multiplicity {mu_root}, expected 1")
    modes[tree.root] = Mode.TREE

    subtrees = 0
    for i in tree.internals:
        mu = mv.get(i, 0)
        kids = tree.children(i)
        doubled = sum(1 for k in kids if mv.get(k, 0) == 2)
        for k in kids:
            mu_k = mv.get(k, 0)
            if mu_k == 0:
                modes[k] = Mode.ABSENT
            elif mu_k == 1:
                modes[k] = Mode.SECOND_CHANCE
            elif mu_k == 2:
                modes[k] = Mode.TREE
            else:
                errors.append(f"leaf {k} has multiplicity {mu_k}")
                modes[k] = Mode.ABSENT
        if mu == 0:
            modes[i] = Mode.ABSENT
            if doubled:
                errors.append(f"internal {i} is absent but {doubled} of its leaves carry multiplicity 2")
        elif doubled and mu == 1 + doubled:
            modes[i] = Mode.TREE
            counts[i] = doubled
            subtrees += 1
        elif mu == 1 and not doubled:
            modes[i] = Mode.SECOND_CHANCE
        else:
            errors.append(f"internal {i} has multiplicity {mu} with {doubled} doubled children")
            modes[i] = Mode.ABSENT
    counts[tree.root] = subtrees

    if errors and strict:
        raise InvalidMultiplicities("; ".join(errors))
    return DecodedQC(tree.n, tree.root, modes, counts, valid=not errors, errors=tuple(errors))


def decode_flat(qc, leader: int, n: int) -> DecodedQC:
    """Star topology: every signature goes straight to the leader, multiplicity 1."""
    mv = _multiplicities(qc)
    errors = [f"signer {s} has multiplicity {c}" for s, c in mv.items() if c != 1 or not 0 <= s < n]
    if leader not in mv:
        errors.append("leader signature missing")
    if errors:
        raise InvalidMultiplicities("; ".join(errors))
    modes = {p: (Mode.TREE if p in mv else Mode.ABSENT) for p in range(n)}
    return DecodedQC(n, leader, modes, {leader: 0})


def _multiplicities(qc) -> MultiplicityVector:
    if isinstance(qc, MultiplicityVector):
        return qc
    if hasattr(qc, "multiplicities"):
        return qc.multiplicities
    return MultiplicityVector(qc)


@dataclass(frozen=True)
class RewardLine:
    mode: Mode
    base: Fraction
    agg_bonus: Fraction
    leader_bonus: Fraction
    punishment: Fraction

    @property
    def total(self) -> Fraction:
        return self.base + self.agg_bonus + self.leader_bonus - self.punishment


@dataclass(frozen=True)
class RewardVector(Mapping):
    lines: Mapping[int, RewardLine] = field(default_factory=dict)

    def __getitem__(self, p: int) -> Fraction:
        return self.lines[p].total

    def __iter__(self):
        return iter(sorted(self.lines))

    def __len__(self):
        return len(self.lines)

    def total(self) -> Fraction:
        return sum((line.total for line in self.lines.values()), Fraction(0))

    def group_total(self, group: Iterable[int]) -> Fraction:
        return sum((self[p] for p in group), Fraction(0))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["process", "mode", "base", "agg_bonus", "leader_bonus", "punishment", "total", "total_decimal"])
        for p in self:
            line = self.lines[p]
            w.writerow([p, line.mode.value, line.base, line.agg_bonus, line.leader_bonus,
                        line.punishment, line.total, f"{float(line.total):.12f}"])
        return buf.getvalue()


def _leader_units(included: int, params: RewardParams) -> Fraction:
    extra = max(0, included - params.quorum)
    return min(params.leader_unit * extra, params.b_l * params.R)


def compute_rewards(decoded: DecodedQC, params: RewardParams) -> RewardVector:
    if not decoded.valid:
        raise InvalidMultiplicities("; ".join(decoded.errors))
    if decoded.n != params.n:
        raise ValueError(f"decoded QC is for n={decoded.n}, params say n={params.n}")
    included = decoded.included
    if len(included) < params.quorum:
        raise NoQuorum(f"{len(included)} signers, quorum is {params.quorum}")

    vote, unit = params.vote_unit, params.agg_unit
    leader = _leader_units(len(included), params)
    partial: dict[int, list] = {}
    paid = Fraction(0)
    for p in range(decoded.n):
        mode = decoded.modes.get(p, Mode.ABSENT)
        base = vote if mode is not Mode.ABSENT else Fraction(0)
        agg = unit * decoded.agg_counts.get(p, 0) if mode is Mode.TREE else Fraction(0)
        lead = leader if p == decoded.root else Fraction(0)
        pun = unit if (mode is Mode.SECOND_CHANCE and p != decoded.root) else Fraction(0)
        paid += base + agg + lead - pun
        partial[p] = [mode, base, agg, lead, pun]
    share = (params.R - paid) / decoded.n
    return RewardVector({p: RewardLine(m, b + share, a, l, u) for p, (m, b, a, l, u) in partial.items()})


@dataclass(frozen=True)
class Tally:
    """Integer summary of one decoded QC, seen from one group of processes."""

    included: int
    agg_units: int
    punished: int
    group_size: int
    group_included: int
    group_agg_units: int
    group_punished: int
    group_has_root: bool


def tally(decoded: DecodedQC, group: Iterable[int]) -> Tally:
    group = set(group)
    inc = agg = pun = g_inc = g_agg = g_pun = 0
    for p, mode in decoded.modes.items():
        if mode is Mode.ABSENT:
            continue
        a = decoded.agg_counts.get(p, 0) if mode is Mode.TREE else 0
        u = int(mode is Mode.SECOND_CHANCE and p != decoded.root)
        inc, agg, pun = inc + 1, agg + a, pun + u
        if p in group:
            g_inc, g_agg, g_pun = g_inc + 1, g_agg + a, g_pun + u
    return Tally(inc, agg, pun, len(group), g_inc, g_agg, g_pun, decoded.root in group)


def group_reward(t: Tally, params: RewardParams) -> Fraction:
    """Sum of ``compute_rewards`` over the group, from integer counts alone."""
    if t.included < params.quorum:
        raise NoQuorum(f"{t.included} signers, quorum is {params.quorum}")
    vote, unit = params.vote_unit, params.agg_unit
    leader = _leader_units(t.included, params)
    paid = vote * t.included + unit * (t.agg_units - t.punished) + leader
    share = (params.R - paid) / params.n
    own = vote * t.group_included + unit * (t.group_agg_units - t.group_punished)
    if t.group_has_root:
        own += leader
    return own + share * t.group_size
