"""Exhaustive search for the cheapest targeted omission on small trees.

This is the reference the closed-form rules in :mod:`.omission` are checked
against.  It enumerates, for every branch (internal plus leaves), every
choice the attackers have, and then every set of pieces the root could put
into the QC.

Model, shared with the protocol implementation:

* a correct internal that receives the block by any route (from the
  proposer or from a 2nd-chance request) hands it to its children and acks
  their votes before anything else reaches them;
* a process that holds an ack can only answer a 2nd-chance request with
  that acked aggregate, an internal that sent its subtree vote answers
  with that vote, anybody else answers with a single signature;
* aggregates are indivisible, so the root can only keep or drop whole
  pieces, and never two pieces that share a signer;
* attackers withhold but never equivocate, and attacker signatures can
  always be added as singles, so they are never part of the collateral.

Pieces from different branches never share signers, so the cheapest
attack is the sum of per-branch minima; each branch is still searched
exhaustively.
"""
from __future__ import annotations

from functools import lru_cache
from itertools import combinations, product

from ..overlay import TreeConfig
from ..rewards import DEFAULT_F, quorum_size
from .omission import INF

MAX_N = 16

# choices an attacker internal has for each correct child
FREE, KEPT, ACKED = "free", "kept", "acked"


class TooLarge(ValueError):
    pass


def _best_exclusion(pieces: list[frozenset], correct: frozenset, victim, must_drop_victim: bool):
    """Fewest correct non-victim processes left uncovered by a disjoint piece selection.

    With ``must_drop_victim`` the selection may not cover the victim.
    Returns None if no selection qualifies.
    """
    best = None
    for r in range(len(pieces) + 1):
        for pick in combinations(pieces, r):
            covered: set = set()
            clash = False
            for p in pick:
                if covered & p:
                    clash = True
                    break
                covered |= p
            if clash:
                continue
            if must_drop_victim == (victim in covered):
                continue
            cost = len(correct - covered - {victim})
            if best is None or cost < best:
                best = cost
    return best


@lru_cache(maxsize=None)
def _branch_cost(internal_bad: bool, kids_bad: tuple, victim_at: int, reach_forced: bool,
                 attacker_root: bool) -> float:
    """Cheapest exclusion inside one branch.

    Members are numbered 0 (the internal) and 1.. (its leaves);
    ``victim_at`` is the victim's member number or -1 if it is elsewhere.
    With a correct root the result is 0 if the victim can be kept out in
    every maximal selection and ``inf`` otherwise.
    """
    members = range(len(kids_bad) + 1)
    bad = {0: internal_bad, **{i + 1: b for i, b in enumerate(kids_bad)}}
    correct = frozenset(p for p in members if not bad[p])
    singles_bad = [frozenset({p}) for p in members if bad[p]]
    kids = list(range(1, len(kids_bad) + 1))
    correct_kids = [k for k in kids if not bad[k]]

    scenarios: list[list[frozenset]] = []
    if not internal_bad:
        # reached: every correct child is in the acked aggregate
        for voting in product((False, True), repeat=sum(bad[k] for k in kids)):
            it = iter(voting)
            bundle = frozenset([0] + [k for k in kids if not bad[k] or next(it)])
            scenarios.append([bundle] + singles_bad)
        if not reach_forced:
            # never reached: contacting the internal would reach it, so only
            # its children can be asked, each for a single signature
            scenarios.append([frozenset({k}) for k in kids])
    else:
        for plan in product((FREE, KEPT, ACKED), repeat=len(correct_kids)):
            bundle = frozenset([0] + [k for k, c in zip(correct_kids, plan) if c != FREE])
            pieces = [bundle] + singles_bad
            pieces += [frozenset({k}) for k, c in zip(correct_kids, plan) if c != ACKED]
            scenarios.append(pieces)

    victim = victim_at if victim_at >= 0 else None
    if attacker_root:
        best = INF
        for pieces in scenarios:
            cost = _best_exclusion(pieces, correct, victim, must_drop_victim=True)
            if cost is not None:
                best = min(best, cost)
        return best

    # correct root: it keeps a selection covering as many signers as possible
    if victim is None:
        return 0
    for pieces in scenarios:
        most = _max_cover(pieces)
        with_victim = _max_cover(pieces, require=victim)
        if with_victim is None or with_victim < most:
            return 0
    return INF


def _max_cover(pieces, require=None):
    best = None
    for r in range(len(pieces) + 1):
        for pick in combinations(pieces, r):
            covered: set = set()
            ok = True
            for p in pick:
                if covered & p:
                    ok = False
                    break
                covered |= p
            if not ok or (require is not None and require not in covered):
                continue
            if best is None or len(covered) > best:
                best = len(covered)
    return best


def oracle_min_collateral(tree: TreeConfig, attackers, victim: int, proposer: int,
                          f=DEFAULT_F) -> float:
    """Smallest collateral over every attacker behaviour, ``inf`` if none works."""
    if tree.n > MAX_N:
        raise TooLarge(f"exhaustive search is limited to n <= {MAX_N}")
    attackers = frozenset(attackers)
    if victim in attackers:
        raise ValueError("victim must be correct")
    if victim == tree.root:
        return INF
    root_bad = tree.root in attackers
    # a correct proposer sends the block to every internal; so does a correct
    # root through its 2nd-chance requests
    forced = proposer not in attackers or not root_bad

    total = 0
    for i in tree.internals:
        branch = tree.branch(i)
        victim_at = branch.index(victim) if victim in branch else -1
        kids_bad = tuple(k in attackers for k in tree.children(i))
        cost = _branch_cost(i in attackers, kids_bad, victim_at, forced, root_bad)
        if cost == INF:
            return INF
        total += cost
    if tree.n - (total + 1) < quorum_size(tree.n, f):
        return INF
    return total
