import pytest
from hypothesis import given, settings, strategies as st

from conftest import small_tree
from iniva import protocol as P
from iniva import sigagg
from iniva.overlay import leader_of
from iniva.rewards import Mode, RewardParams, compute_rewards, decode_roles
from iniva.simnet import SimConfig, run, run_no2c, simulate_view

BLOCK = P.Block(1, 0, None, sigagg.digest(b"payload"))
TREE = small_tree()  # root 0; internals 1, 2; leaves 3, 5 under 1 and 4, 6 under 2
PARAMS = P.ProtocolParams(7, 2)


def state(pid):
    return P.ProcessState(pid, PARAMS, TREE)


def sends(actions, kind=None):
    return [(a.dst, type(a.msg).__name__) for a in actions
            if isinstance(a, P.Send) and (kind is None or isinstance(a.msg, kind))]


def test_proposer_sends_to_root_and_internals():
    assert sorted(sends(state(3).on_commit_propose(BLOCK))) == [(0, "Proposal"), (1, "Proposal"), (2, "Proposal")]


def test_proposer_needs_parent_qc():
    with pytest.raises(P.NoQC):
        state(3).on_commit_propose(P.Block(2, 1, None, sigagg.digest(b"x")))
    with pytest.raises(P.InvalidBlock):
        state(3).on_commit_propose(P.Block(1, 0, None, b"short"))


def test_internal_weights_children_and_itself():
    s = state(1)
    out = s.on_proposal(BLOCK, 0)
    assert sends(out) == [(3, "Proposal"), (5, "Proposal")]
    assert s.on_child_vote(3, sigagg.build({3: 1}, BLOCK.digest)) == []
    out = s.on_child_vote(5, sigagg.build({5: 1}, BLOCK.digest))
    vote = next(a.msg for a in out if isinstance(a.msg, P.Vote))
    assert vote.agg.multiplicities == {1: 3, 3: 2, 5: 2}
    assert sorted(sends(out, P.Ack)) == [(3, "Ack"), (5, "Ack")]


def test_internal_ignores_forged_and_foreign_votes():
    s = state(1)
    s.on_proposal(BLOCK, 0)
    assert s.on_child_vote(4, sigagg.build({4: 1}, BLOCK.digest)) == []
    assert s.on_child_vote(3, sigagg.build({3: 2}, BLOCK.digest)) == []
    assert s.child_sigs == {}


def test_internal_timer_sends_partial_vote():
    s = state(1)
    s.on_proposal(BLOCK, 0)
    s.on_child_vote(3, sigagg.build({3: 1}, BLOCK.digest))
    out = s.on_timer("aggregation", 200)
    vote = next(a.msg for a in out if isinstance(a.msg, P.Vote))
    assert vote.agg.multiplicities == {1: 2, 3: 2}


def test_root_rejects_inconsistent_subtree():
    s = state(0)
    s.on_proposal(BLOCK, 0)
    assert s.on_subtree_vote(1, sigagg.build({1: 3, 3: 2}, BLOCK.digest), 10) == []
    assert s.pieces == []


def test_second_chance_validity():
    leaf = state(3)
    leaf.on_proposal(BLOCK, 0)
    weak = sigagg.build({0: 1, 2: 1}, BLOCK.digest)
    assert not leaf.is_valid_second_chance(P.SecondChance(BLOCK, weak, 3), 100)
    # parent present, quorum reached, or the block is old enough: all make it valid
    assert leaf.is_valid_second_chance(P.SecondChance(BLOCK, sigagg.build({0: 1, 1: 1}, BLOCK.digest), 3), 100)
    strong = sigagg.build({p: 1 for p in (0, 2, 4, 5, 6)}, BLOCK.digest)
    assert leaf.is_valid_second_chance(P.SecondChance(BLOCK, strong, 3), 100)
    assert leaf.is_valid_second_chance(P.SecondChance(BLOCK, weak, 3), PARAMS.valid_after)


def test_second_chance_reply_prefers_ack():
    leaf = state(3)
    leaf.on_proposal(BLOCK, 0)
    acked = sigagg.build({1: 2, 3: 2}, BLOCK.digest)
    leaf.on_ack(1, acked)
    msg = P.SecondChance(BLOCK, sigagg.build({0: 1, 1: 1}, BLOCK.digest), 3)
    out = leaf.on_second_chance(msg, 500)
    assert out == [P.Send(0, P.SecondChanceReply(acked))]


def test_late_internal_answers_with_subtree():
    s = state(1)
    msg = P.SecondChance(BLOCK, sigagg.build({p: 1 for p in (0, 2, 4, 6)}, BLOCK.digest), 1)
    out = s.on_second_chance(msg, 600)
    assert sorted(sends(out)) == [(3, "Proposal"), (5, "Proposal")]
    s.on_child_vote(3, sigagg.build({3: 1}, BLOCK.digest))
    out = s.on_child_vote(5, sigagg.build({5: 1}, BLOCK.digest))
    reply = [a.msg for a in out if isinstance(a.msg, P.SecondChanceReply)]
    assert reply and reply[0].agg.multiplicities == {1: 3, 3: 2, 5: 2}


def test_honest_view_includes_everyone_by_tree():
    cfg = SimConfig(n=21, fanout=4, views=1)
    r = simulate_view(cfg, 0)
    assert not r.failed and r.qc.signers == frozenset(range(21))
    d = decode_roles(r.qc, r.tree)
    assert all(d.mode(p) is Mode.TREE for p in range(21))
    assert r.qc_time <= 7 * cfg.delta


def test_crashed_internal_leaves_come_back_by_second_chance():
    cfg = SimConfig(n=21, fanout=4, views=1)
    tree = simulate_view(cfg, 0).tree
    dead = tree.internals[0]
    r = simulate_view(cfg, 0, crashed={dead})
    d = decode_roles(r.qc, r.tree)
    assert not r.failed and r.qc.signers == frozenset(range(21)) - {dead}
    assert all(d.mode(k) is Mode.SECOND_CHANCE for k in tree.children(dead))


def test_leader_crash_fails_view():
    cfg = SimConfig(n=21, fanout=4, views=1)
    assert simulate_view(cfg, 0, crashed={leader_of(0, 21)}).failed
    assert simulate_view(cfg, 0, crashed={leader_of(1, 21)}).failed


def test_no2c_two_crashed_internals_fail():
    cfg = SimConfig(n=21, fanout=4, views=1, second_chance=False)
    for view in range(20):
        tree = simulate_view(cfg, view).tree
        r = simulate_view(cfg, view, crashed=set(tree.internals[:2]))
        assert r.failed


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(n=21, fanout=4, crashes=8)
    with pytest.raises(ValueError):
        SimConfig(n=4, fanout=4)
    with pytest.raises(ValueError):
        SimConfig(crash_set=(99,))


def test_runs_are_deterministic():
    cfg = SimConfig(n=21, fanout=4, crashes=3, views=30, seed=5)
    assert run(cfg).to_csv() == run(cfg).to_csv()
    assert run(cfg, trace=True).trace_csv() == run(cfg, trace=True).trace_csv()


def test_no_crash_no_failures():
    assert run(SimConfig(n=21, fanout=4, views=40)).failed_fraction == 0
    assert run_no2c(SimConfig(n=21, fanout=4, views=40)).failed_fraction == 0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 10**6), st.data())
def test_view_properties_under_crashes(view, seed, data):
    n, fanout = 21, 4
    cfg = SimConfig(n=n, fanout=fanout, views=1, seed=seed)
    leaders = {leader_of(view, n), leader_of(view + 1, n)}
    others = sorted(set(range(n)) - leaders)
    crashed = data.draw(st.sets(st.sampled_from(others), max_size=7))
    r = simulate_view(cfg, view, crashed=crashed)
    correct = frozenset(range(n)) - crashed
    assert not r.failed
    assert r.delivered >= correct                      # reliable dissemination
    assert r.qc.signers >= correct                     # inclusiveness
    assert r.qc_time <= 7 * cfg.delta
    d = decode_roles(r.qc, r.tree)                     # raises on any invalid pattern
    assert compute_rewards(d, RewardParams(n=n)).total() == 1
