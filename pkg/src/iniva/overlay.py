"""Per-view committee shuffle and the height-2 aggregation tree."""
from __future__ import annotations

import enum
import hashlib
import struct
from dataclasses import dataclass, field

from .sigagg import DIGEST_SIZE, MessageDigest


class CommitteeTooSmall(ValueError):
    pass


class UnknownProcess(KeyError):
    pass


class Role(enum.Enum):
    ROOT = "root"
    INTERNAL = "internal"
    LEAF = "leaf"


@dataclass(frozen=True)
class RoundSeed:
    qc_digest: MessageDigest
    view: int

    def __post_init__(self):
        if len(self.qc_digest) != DIGEST_SIZE:
            raise ValueError("qc_digest must be 32 bytes")
        if self.view < 0:
            raise ValueError("view must be non-negative")

    def key(self) -> bytes:
        return hashlib.sha256(b"iniva-shuffle" + self.qc_digest + struct.pack("<Q", self.view)).digest()


def leader_of(view: int, n: int) -> int:
    """Round-robin over the original ids."""
    return view % n


class _CounterPRF:
    """SHA-256 in counter mode, yielding 64-bit words."""

    def __init__(self, key: bytes):
        self._key = key
        self._counter = 0
        self._buf: list[int] = []

    def next64(self) -> int:
        if not self._buf:
            block = hashlib.sha256(self._key + struct.pack("<Q", self._counter)).digest()
            self._counter += 1
            self._buf = list(struct.unpack("<4Q", block))
        return self._buf.pop(0)

    def below(self, bound: int) -> int:
        # rejection sampling keeps the draw exactly uniform
        limit = (1 << 64) - (1 << 64) % bound
        while True:
            x = self.next64()
            if x < limit:
                return x % bound


def shuffle(seed: RoundSeed, n: int) -> list[int]:
    """Fisher-Yates over ``range(n)`` driven by a counter-mode PRF of the seed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    perm = list(range(n))
    prf = _CounterPRF(seed.key())
    for i in range(n - 1, 0, -1):
        j = prf.below(i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return perm


@dataclass(frozen=True)
class TreeConfig:
    n: int
    fanout: int
    root: int
    internals: tuple[int, ...]
    leaves: tuple[int, ...]
    # parent of every non-root process
    parents: dict = field(compare=False, repr=False)
    kids: dict = field(compare=False, repr=False)

    def role_of(self, p: int) -> Role:
        if p == self.root:
            return Role.ROOT
        parent = self.parents.get(p)
        if parent is None:
            raise UnknownProcess(p)
        return Role.INTERNAL if parent == self.root else Role.LEAF

    def parent(self, p: int) -> int | None:
        if p == self.root:
            return None
        try:
            return self.parents[p]
        except KeyError:
            raise UnknownProcess(p) from None

    def children(self, p: int) -> tuple[int, ...]:
        if p != self.root and p not in self.parents:
            raise UnknownProcess(p)
        return self.kids.get(p, ())

    def height(self, p: int) -> int:
        return {Role.ROOT: 2, Role.INTERNAL: 1, Role.LEAF: 0}[self.role_of(p)]

    def branch(self, internal: int) -> tuple[int, ...]:
        """The internal followed by its leaves."""
        return (internal,) + self.children(internal)

    def members(self) -> tuple[int, ...]:
        return (self.root,) + self.internals + self.leaves

    def dump(self) -> str:
        lines = [f"{self.root} root -"]
        lines += [f"{p} internal {self.root}" for p in self.internals]
        lines += [f"{p} leaf {self.parents[p]}" for p in self.leaves]
        return "\n".join(lines) + "\n"


def build_tree(perm: list[int], fanout: int, next_leader: int) -> TreeConfig:
    n = len(perm)
    if fanout < 2:
        raise ValueError("fanout must be >= 2")
    if sorted(perm) != list(range(n)):
        raise ValueError("perm is not a permutation of range(n)")
    if not 0 <= next_leader < n:
        raise UnknownProcess(next_leader)
    if n < 1 + fanout:
        raise CommitteeTooSmall(f"n={n} cannot seat a root and {fanout} internals")
    rest = [p for p in perm if p != next_leader]
    internals = tuple(rest[:fanout])
    leaves = tuple(rest[fanout:])
    parents = {p: next_leader for p in internals}
    kids: dict[int, list[int]] = {next_leader: list(internals)}
    for p in internals:
        kids[p] = []
    for idx, p in enumerate(leaves):
        owner = internals[idx % fanout]
        parents[p] = owner
        kids[owner].append(p)
    return TreeConfig(
        n=n,
        fanout=fanout,
        root=next_leader,
        internals=internals,
        leaves=leaves,
        parents=parents,
        kids={p: tuple(c) for p, c in kids.items()},
    )


def tree_for_view(seed: RoundSeed, n: int, fanout: int) -> TreeConfig:
    """The tree every process derives for ``seed.view``; its root is the next leader."""
    return build_tree(shuffle(seed, n), fanout, leader_of(seed.view + 1, n))
