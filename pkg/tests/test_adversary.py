import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from iniva.adversary import (INF, GossipConfig, collateral_samples, gosig_collateral_samples, gosig_trial,
                             iniva_min_collateral, iniva_plan, iniva_trial, oracle_min_collateral, star_trial,
                             sweep)
from iniva.adversary.gosig import full_propagation_rounds
from iniva.adversary.omission import (SlotLayout, _sample_slots, affordable, iniva_collateral_batch,
                                      sample_attackers)
from iniva.adversary.oracle import TooLarge
from iniva.overlay import RoundSeed, build_tree, tree_for_view
from iniva.rewards import Mode, quorum_size


def exhaustive_cases(n):
    """Every (tree shape, attacker set, victim, proposer class) on ``n`` processes.

    Trees are taken up to relabelling (slot order of ``build_tree``).  Both
    the rule and the oracle look at the proposer only through whether it is
    an attacker, so one proposer per class suffices.
    """
    for fanout in range(2, n):
        tree = build_tree(list(range(n)), fanout, 0)
        for mask in range(1 << n):
            att = frozenset(p for p in range(n) if mask >> p & 1)
            bad = [p for p in range(1, n) if p in att]
            good = [p for p in range(1, n) if p not in att]
            for victim in (p for p in range(n) if p not in att):
                proposers = {x[0] for x in (bad, good) if x}
                if victim != 0:
                    proposers.add(victim)
                for proposer in proposers:
                    yield tree, att, victim, proposer


# n=13, fanout 3, root 0; internals 1, 2, 3; leaf p belongs to internal 1 + (p - 4) % 3
TREE = build_tree(list(range(13)), 3, 0)


@pytest.mark.parametrize("attackers,victim,proposer,expected", [
    ({1}, 0, 5, INF),                 # victim is the root
    ({1, 2}, 4, 5, INF),              # correct root includes everybody
    ({0, 1}, 4, 5, 0),                # attacker parent drops its leaf
    ({0, 5}, 1, 5, 0),                # internal never receives the block
    ({0, 5}, 1, 6, 3),                # correct proposer: the whole branch goes
    ({0, 5}, 4, 5, 1),                # parent 1 kept in the dark
    ({0}, 4, 5, 3),                   # correct everything else: drop branch 1, 4, 7, 10
    ({0, 7}, 4, 5, 2),                # attacker sibling 7 is re-added
])
def test_rule_cases(attackers, victim, proposer, expected):
    assert iniva_min_collateral(TREE, attackers, victim, proposer) == expected
    assert oracle_min_collateral(TREE, attackers, victim, proposer) == expected


def test_plan_names_case():
    assert iniva_plan(TREE, {0, 1}, 4, 5) == ("leaf_parent", frozenset({4}))
    assert iniva_plan(TREE, {0, 5}, 4, 5) == ("parent_unreached", frozenset({1, 4}))
    assert iniva_plan(TREE, {0, 5}, 1, 5) == ("internal_unreached", frozenset({1}))
    assert iniva_plan(TREE, {0}, 4, 5)[0] == "branch"
    assert iniva_plan(TREE, {1}, 4, 5)[0] == "none"
    with pytest.raises(ValueError):
        iniva_plan(TREE, {0, 4}, 4, 5)


def test_quorum_limits_collateral():
    # a branch bigger than n - quorum cannot be dropped
    tree = build_tree(list(range(7)), 2, 0)
    assert iniva_min_collateral(tree, {0}, 3, 4) == INF
    assert quorum_size(7) == 5


def test_oracle_refuses_large_trees():
    with pytest.raises(TooLarge):
        oracle_min_collateral(build_tree(list(range(20)), 4, 0), {0}, 5, 1)


@pytest.mark.parametrize("n", range(3, 9))
def test_rule_matches_oracle_exhaustive_small(n):
    for tree, att, victim, proposer in exhaustive_cases(n):
        rule = iniva_min_collateral(tree, att, victim, proposer)
        assert rule == oracle_min_collateral(tree, att, victim, proposer), (tree.fanout, sorted(att), victim, proposer)


def test_slot_layout_matches_build_tree():
    for n, fanout in [(111, 10), (109, 4), (13, 3), (5, 4)]:
        tree = build_tree(list(range(n)), fanout, 0)
        layout = SlotLayout.make(n, fanout)
        for p in range(1, n):
            assert layout.parent[p] == tree.parent(p)
            owner = p if p in tree.internals else tree.parent(p)
            assert layout.branch_of[p] == tree.internals.index(owner)


@pytest.mark.parametrize("n,fanout,m", [(111, 10, 0.3), (21, 4, 0.2), (13, 3, 0.5), (109, 4, 0.1)])
def test_batch_matches_scalar_rule(n, fanout, m):
    rng = np.random.default_rng(7)
    att, victim, proposer, ok = _sample_slots(n, m, 3000, rng)
    cost = iniva_collateral_batch(SlotLayout.make(n, fanout), att, victim, proposer)
    tree = build_tree(list(range(n)), fanout, 0)
    for row in np.flatnonzero(ok):
        a = frozenset(np.flatnonzero(att[row]).tolist())
        assert cost[row] == iniva_min_collateral(tree, a, int(victim[row]), int(proposer[row]))


def test_sample_slots_victim_is_correct():
    rng = np.random.default_rng(0)
    att, victim, proposer, ok = _sample_slots(7, 0.6, 5000, rng)
    rows = np.flatnonzero(ok)
    assert not att[rows, victim[rows]].any()
    assert (proposer >= 1).all() and (proposer < 7).all()
    assert ok.sum() < 5000


def test_affordable():
    assert bool(affordable(3, 3)) and not bool(affordable(4, 3))
    assert not bool(affordable(INF, INF))
    assert affordable(np.array([0.0, INF]), INF).tolist() == [True, False]


def test_samples_deterministic_and_seeded():
    a = collateral_samples("iniva", 111, 10, 0.2, 60_000, seed=3)
    b = collateral_samples("iniva", 111, 10, 0.2, 60_000, seed=3)
    c = collateral_samples("iniva", 111, 10, 0.2, 60_000, seed=4)
    assert len(a) == 60_000 and np.array_equal(a, b) and not np.array_equal(a, c)
    with pytest.raises(ValueError):
        collateral_samples("gosig", 111, 10, 0.2, 10)


def test_sweep_monotone_in_collateral():
    points = sweep("iniva", 111, 10, [0.2], [0, 1, 5, 10, INF], 40_000, seed=1)
    rates = [p.success_rate for p in points]
    assert rates == sorted(rates)
    assert points[0].row()["success_rate"] == f"{rates[0]:.6f}"


def test_rate_monotone_in_m_with_coupled_samples():
    for protocol, fanout in (("iniva", 10), ("star", 0)):
        points = sweep(protocol, 111, fanout, [0.05, 0.1, 0.2, 0.3], [0, 5], 20_000, seed=2)
        for c in (0, 5):
            rates = [p.success_rate for p in points if p.c == c]
            assert rates == sorted(rates)


def test_scalar_trials_agree_with_sweep():
    rng = np.random.default_rng(11)
    m, trials = 0.3, 4000
    star = sum(star_trial(111, m, rng).success for _ in range(trials)) / trials
    iniva = sum(iniva_trial(111, 10, m, rng).success for _ in range(trials)) / trials
    assert abs(star - m) < 4 * math.sqrt(m * (1 - m) / trials)
    assert abs(iniva - m * m) < 4 * math.sqrt(m * m / trials)


@settings(max_examples=200, deadline=None)
@given(st.integers(3, 40), st.integers(2, 10), st.floats(0.05, 0.6), st.integers(0, 2**32 - 1))
def test_rule_invariants(n, fanout, m, seed):
    if n < fanout + 1:
        return
    rng = np.random.default_rng(seed)
    att, victim = sample_attackers(n, m, rng)
    view = int(rng.integers(n))
    tree = tree_for_view(RoundSeed(rng.bytes(32), view), n, fanout)
    case, excluded = iniva_plan(tree, att, victim, view % n)
    if case == "none":
        assert iniva_min_collateral(tree, att, victim, view % n) == INF
        return
    assert tree.root in att and victim in excluded
    assert not excluded & att
    assert n - len(excluded) >= quorum_size(n)
    # a correct proposer can only help the victim
    if view % n in att:
        others = [p for p in range(n) if p not in att and p != tree.root]
        if others:
            assert iniva_min_collateral(tree, att, victim, others[0]) >= len(excluded) - 1


# gossip model

def test_rounds():
    assert full_propagation_rounds(111, 2) == 5 + 2
    assert full_propagation_rounds(9, 2) == 2 + 2
    assert full_propagation_rounds(111, 10) == 2 + 2
    assert GossipConfig(111, 2, rounds=3).round_count == 3


def test_gossip_config_validation():
    with pytest.raises(ValueError):
        GossipConfig(k=0)
    with pytest.raises(ValueError):
        GossipConfig(n=5, k=5)
    with pytest.raises(ValueError):
        GossipConfig(free_rider_fraction=1.5)


def test_gossip_outcome_shape():
    rng = np.random.default_rng(2)
    for _ in range(50):
        out = gosig_trial(31, 0.3, 2, 0.0, False, rng, c=INF)
        if out.success:
            assert out.victim in out.excluded and out.min_collateral == len(out.excluded) - 1
        else:
            assert not out.excluded


def test_gossip_samples_deterministic():
    cfg = GossipConfig(31, 2, 0.2)
    a = gosig_collateral_samples(cfg, 200, seed=1)
    assert np.array_equal(a, gosig_collateral_samples(cfg, 200, seed=1))
    assert len(a) == 200


def test_gossip_rate_grows_with_attackers():
    low = np.isfinite(gosig_collateral_samples(GossipConfig(61, 2, 0.05), 600, 0)).mean()
    high = np.isfinite(gosig_collateral_samples(GossipConfig(61, 2, 0.4), 600, 0)).mean()
    assert high > low
