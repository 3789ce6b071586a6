import itertools
from collections import Counter

import pytest
from hypothesis import given, strategies as st
from scipy.stats import chisquare

from iniva.overlay import (CommitteeTooSmall, Role, RoundSeed, UnknownProcess, build_tree, leader_of, shuffle,
                           tree_for_view)
from iniva.sigagg import digest

ZERO = bytes(32)


def test_shuffle_frozen():
    assert shuffle(RoundSeed(ZERO, 0), 10) == [8, 3, 4, 7, 0, 9, 6, 5, 2, 1]
    assert shuffle(RoundSeed(ZERO, 7), 12) == [2, 0, 3, 6, 7, 5, 4, 11, 10, 1, 9, 8]


def test_tree_frozen():
    t = tree_for_view(RoundSeed(digest(b"iniva-genesis0"), 0), 21, 4)
    assert (t.root, t.internals, t.children(17)) == (1, (17, 5, 10, 11), (18, 9, 4, 2))


def test_shuffle_uniform_chi_square():
    # all 24 orderings of 4 elements should be equally likely
    counts = Counter(tuple(shuffle(RoundSeed(digest(str(i).encode()), 0), 4)) for i in range(12000))
    observed = [counts[p] for p in itertools.permutations(range(4))]
    assert chisquare(observed).pvalue > 1e-3


def test_round_seed_validation():
    with pytest.raises(ValueError):
        RoundSeed(b"x", 0)
    with pytest.raises(ValueError):
        RoundSeed(ZERO, -1)


def test_build_tree_errors():
    with pytest.raises(CommitteeTooSmall):
        build_tree(list(range(4)), 4, 0)
    with pytest.raises(ValueError):
        build_tree([0, 0, 1], 2, 0)
    with pytest.raises(ValueError):
        build_tree(list(range(5)), 1, 0)
    with pytest.raises(UnknownProcess):
        build_tree(list(range(5)), 2, 9)
    t = build_tree(list(range(5)), 2, 0)
    with pytest.raises(UnknownProcess):
        t.role_of(17)


def test_n111_fanout10_shape():
    t = tree_for_view(RoundSeed(ZERO, 3), 111, 10)
    assert t.root == leader_of(4, 111) == 4
    assert len(t.internals) == 10
    assert sorted(len(t.children(i)) for i in t.internals) == [10] * 10
    assert len(t.dump().splitlines()) == 111


@given(st.integers(3, 80), st.integers(2, 12), st.integers(0, 10_000), st.binary(min_size=32, max_size=32))
def test_tree_invariants(n, fanout, view, qc):
    if n < fanout + 1:
        with pytest.raises(CommitteeTooSmall):
            tree_for_view(RoundSeed(qc, view), n, fanout)
        return
    t = tree_for_view(RoundSeed(qc, view), n, fanout)
    assert sorted(t.members()) == list(range(n))
    assert t.root == (view + 1) % n
    assert len(t.internals) == fanout
    sizes = [len(t.children(i)) for i in t.internals]
    assert max(sizes) - min(sizes) <= 1
    for p in t.leaves:
        assert t.role_of(p) is Role.LEAF and t.parent(t.parent(p)) == t.root
    for i in t.internals:
        assert t.height(i) == 1 and t.parent(i) == t.root
    assert t.height(t.root) == 2
    # every process derives the same tree
    assert tree_for_view(RoundSeed(qc, view), n, fanout) == t


@given(st.binary(min_size=32, max_size=32), st.integers(0, 100), st.integers(1, 60))
def test_shuffle_is_permutation(qc, view, n):
    assert sorted(shuffle(RoundSeed(qc, view), n)) == list(range(n))
