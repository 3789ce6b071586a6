"""Per-process state machine for block dissemination and tree aggregation.

Handlers never touch a network.  Each returns a list of actions
(:class:`Send`, :class:`SetTimer`, :class:`EmitQC`, :class:`ViewFailed`) that
a driver such as :mod:`iniva.simnet` executes.
"""
from __future__ import annotations

import struct
from functools import cached_property
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Union

from . import sigagg
from .overlay import Role, TreeConfig
from .rewards import DEFAULT_F, quorum_size
from .sigagg import AggregateSignature, MultiplicityVector, Signature

ZERO_DIGEST = bytes(32)


class ProtocolError(Exception):
    pass


class NoQC(ProtocolError):
    pass


class InvalidBlock(ProtocolError):
    pass


class InconsistentMultiplicities(ProtocolError):
    pass


@dataclass(frozen=True)
class QuorumCertificate:
    block_digest: bytes
    view: int
    aggregate: AggregateSignature

    @property
    def multiplicities(self) -> MultiplicityVector:
        return self.aggregate.multiplicities

    @property
    def signers(self) -> frozenset[int]:
        return self.aggregate.signers

    def to_bytes(self) -> bytes:
        mv = self.multiplicities.to_bytes()
        return self.block_digest + struct.pack("<QI", self.view, len(self.multiplicities)) + mv

    @cached_property
    def digest(self) -> bytes:
        return sigagg.digest(b"INIVA-QC" + self.to_bytes())


@dataclass(frozen=True)
class Block:
    height: int
    view: int
    parent_qc: Optional[QuorumCertificate]
    payload: bytes = ZERO_DIGEST
    timestamp: int = 0

    def to_bytes(self) -> bytes:
        parent = self.parent_qc.digest if self.parent_qc is not None else ZERO_DIGEST
        return (b"INIVA-BLOCK" + struct.pack("<QQ", self.height, self.view) + parent
                + self.payload + struct.pack("<q", self.timestamp))

    @cached_property
    def digest(self) -> bytes:
        return sigagg.digest(self.to_bytes())

    def is_valid(self) -> bool:
        if self.height < 1 or len(self.payload) != 32:
            return False
        if self.parent_qc is None:
            return self.height == 1
        return True

    @property
    def qc_digest(self) -> bytes:
        return self.parent_qc.digest if self.parent_qc is not None else ZERO_DIGEST


# messages

@dataclass(frozen=True)
class Proposal:
    block: Block


@dataclass(frozen=True)
class Vote:
    agg: AggregateSignature


@dataclass(frozen=True)
class Ack:
    agg: AggregateSignature


@dataclass(frozen=True)
class SecondChance:
    # carries the block itself so a process that missed dissemination can deliver it
    block: Block
    current_agg: AggregateSignature
    missing: int

    @property
    def block_digest(self) -> bytes:
        return self.block.digest


@dataclass(frozen=True)
class SecondChanceReply:
    agg: AggregateSignature


Message = Union[Proposal, Vote, Ack, SecondChance, SecondChanceReply]


# actions

@dataclass(frozen=True)
class Send:
    dst: int
    msg: Message


@dataclass(frozen=True)
class SetTimer:
    name: str
    delay: int


@dataclass(frozen=True)
class EmitQC:
    qc: QuorumCertificate


@dataclass(frozen=True)
class ViewFailed:
    reason: str


@dataclass(frozen=True)
class ProtocolParams:
    n: int
    fanout: int
    delta: int = 100
    second_chance_delta: Optional[int] = None
    t_valid: Optional[int] = None
    second_chance: bool = True
    f: Fraction = DEFAULT_F

    @property
    def sc_timer(self) -> int:
        return 2 * self.delta if self.second_chance_delta is None else self.second_chance_delta

    @property
    def valid_after(self) -> int:
        return 5 * self.delta if self.t_valid is None else self.t_valid

    @property
    def quorum(self) -> int:
        return quorum_size(self.n, self.f)

    def aggregation_timer(self, height: int) -> int:
        return 2 * self.delta * height


def subtree_shape(agg: AggregateSignature, internal: int, tree: TreeConfig) -> Optional[tuple[int, ...]]:
    """Children claimed by a well-formed subtree aggregate of ``internal``.

    Well formed means every claimed child of ``internal`` at multiplicity 2
    and ``internal`` itself at ``1 + #claimed``; returns None otherwise.
    """
    mv = agg.multiplicities
    kids = set(tree.children(internal))
    claimed = tuple(s for s in mv if s != internal)
    if any(s not in kids or mv[s] != 2 for s in claimed):
        return None
    if mv.get(internal, 0) != 1 + len(claimed):
        return None
    return claimed


@dataclass
class ProcessState:
    pid: int
    params: ProtocolParams
    tree: TreeConfig
    block: Optional[Block] = None
    signature: Optional[Signature] = None
    child_sigs: dict[int, AggregateSignature] = field(default_factory=dict)
    ack: Optional[AggregateSignature] = None
    sent_vote: Optional[AggregateSignature] = None
    replied: bool = False
    reply_pending: bool = False
    # root bookkeeping
    pieces: list[AggregateSignature] = field(default_factory=list)
    reported: set = field(default_factory=set)
    sc_targets: set = field(default_factory=set)
    sc_answered: set = field(default_factory=set)
    finalizing: bool = False
    done: bool = False
    delivered_at: Optional[int] = None
    signatures_made: int = 0

    @property
    def role(self) -> Role:
        return self.tree.role_of(self.pid)

    @property
    def block_digest(self) -> bytes:
        return self.block.digest

    def _own(self) -> Signature:
        if self.signature is None:
            self.signature = sigagg.sign(self.pid, self.block_digest)
            self.signatures_made += 1
        return self.signature

    def _deliver(self, block: Block, now: int) -> None:
        self.block = block
        self.delivered_at = now

    # dissemination

    def on_commit_propose(self, block: Block) -> list:
        """Run at the proposer L_v: send the new block to the root and every internal."""
        if block.height > 1 and block.parent_qc is None:
            raise NoQC("proposer holds no QC for the parent block")
        if not block.is_valid():
            raise InvalidBlock("malformed block")
        return [Send(p, Proposal(block)) for p in (self.tree.root,) + self.tree.internals]

    def on_proposal(self, block: Block, now: int) -> list:
        if not block.is_valid():
            return []  # vote is bottom: say nothing
        if self.block is not None:
            return []
        self._deliver(block, now)
        role = self.role
        out: list = [Send(c, Proposal(block)) for c in self.tree.children(self.pid)]
        if role is Role.LEAF:
            out.append(Send(self.tree.parent(self.pid), Vote(sigagg.aggregate([(self._own(), 1)]))))
        elif role is Role.INTERNAL:
            if not self.tree.children(self.pid):
                out += self._send_subtree_vote()
            else:
                out.append(SetTimer("aggregation", self.params.aggregation_timer(1)))
        else:
            self._own()
            out.append(SetTimer("aggregation", self.params.aggregation_timer(2)))
        return out

    # internal processes

    def on_child_vote(self, child: int, agg: AggregateSignature) -> list:
        if self.role is not Role.INTERNAL or self.block is None or self.sent_vote is not None:
            return []
        if child not in self.tree.children(self.pid):
            return []  # unknown child
        if not sigagg.verify(agg, {child: 1}, self.block_digest):
            return []  # bad signature
        self.child_sigs[child] = agg
        if len(self.child_sigs) == len(self.tree.children(self.pid)):
            return self._send_subtree_vote()
        return []

    def _send_subtree_vote(self) -> list:
        kids = sorted(self.child_sigs)
        parts = [(self.child_sigs[c], 2) for c in kids] + [(self._own(), 1 + len(kids))]
        agg = sigagg.aggregate(parts)
        self.sent_vote = agg
        out = [Send(self.tree.root, Vote(agg))] + [Send(c, Ack(agg)) for c in kids]
        if self.reply_pending:
            self.reply_pending = False
            out.append(Send(self.tree.root, SecondChanceReply(agg)))
        return out

    def on_ack(self, src: int, agg: AggregateSignature) -> list:
        if self.block is None or agg.message != self.block_digest or self.pid not in agg:
            return []
        if src != self.tree.parent(self.pid):
            return []
        self.ack = agg
        return []

    # root

    def on_subtree_vote(self, internal: int, agg: AggregateSignature, now: int) -> list:
        if self.role is not Role.ROOT or self.block is None or self.done:
            return []
        if internal not in self.tree.internals or agg.message != self.block_digest:
            return []
        if subtree_shape(agg, internal, self.tree) is None:
            return []  # inconsistent multiplicities: treat the internal as missing
        self.reported.add(internal)
        self._keep(agg)
        out: list = [Send(internal, Ack(agg))]
        if self.finalizing:
            out += self._maybe_complete()
        elif self.reported == set(self.tree.internals):
            out += self.leader_finalize(now)
        return out

    def _keep(self, agg: AggregateSignature) -> None:
        """Add a piece, never aggregating two that share a signer.

        A piece overlapping kept ones replaces them only if it covers at
        least as many distinct signers as they do together.
        """
        new = agg.signers
        if self.pid in new:
            return
        overlapping = [p for p in self.pieces if p.signers & new]
        covered = frozenset().union(*(p.signers for p in overlapping)) if overlapping else frozenset()
        if overlapping and (len(new) < len(covered) or (len(new) == len(covered) and new != covered)):
            return
        if any(p == agg for p in overlapping):
            return
        self.pieces = [p for p in self.pieces if p not in overlapping] + [agg]

    def current_aggregate(self) -> AggregateSignature:
        return sigagg.aggregate([(self._own(), 1)] + [(p, 1) for p in self.pieces])

    def covered(self) -> set:
        out = {self.pid}
        for p in self.pieces:
            out |= p.signers
        return out

    def leader_finalize(self, now: int) -> list:
        if self.finalizing or self.done:
            return []
        self.finalizing = True
        missing = set(self.tree.members()) - self.covered()
        if not self.params.second_chance or not missing:
            return self._emit()
        current = self.current_aggregate()
        self.sc_targets = missing
        out: list = [Send(p, SecondChance(self.block, current, p)) for p in sorted(missing)]
        out.append(SetTimer("second_chance", self.params.sc_timer))
        return out

    def on_second_chance_reply(self, src: int, agg: AggregateSignature) -> list:
        if self.role is not Role.ROOT or not self.finalizing or self.done:
            return []
        if agg.message != self.block_digest or src not in agg:
            return []
        mv = agg.multiplicities
        ok = mv == MultiplicityVector({src: 1})
        if not ok:
            owner = next((s for s in agg.signers if s in self.tree.internals), None)
            ok = owner is not None and subtree_shape(agg, owner, self.tree) is not None
        if not ok:
            return []
        self.sc_answered.add(src)
        self._keep(agg)
        return self._maybe_complete()

    def _maybe_complete(self) -> list:
        if self.sc_targets <= (self.sc_answered | self.covered()):
            return self._emit()
        return []

    def on_timer(self, name: str, now: int) -> list:
        if name == "aggregation":
            if self.role is Role.INTERNAL and self.sent_vote is None:
                return self._send_subtree_vote()
            if self.role is Role.ROOT:
                return self.leader_finalize(now)
        elif name == "second_chance" and self.role is Role.ROOT and not self.done:
            return self._emit()
        return []

    def _emit(self) -> list:
        self.done = True
        agg = self.current_aggregate()
        if len(agg.signers) < self.params.quorum:
            return [ViewFailed(f"no quorum: {len(agg.signers)} < {self.params.quorum}")]
        return [EmitQC(QuorumCertificate(self.block_digest, self.block.view, agg))]

    # 2nd-chance handling at ordinary processes

    def is_valid_second_chance(self, msg: SecondChance, now: int) -> bool:
        agg = msg.current_agg
        if self.pid in agg or agg.message != msg.block.digest:
            return False
        parent = self.tree.parent(self.pid)
        return (len(agg.signers) >= self.params.quorum
                or (parent is not None and parent in agg)
                or now - msg.block.timestamp >= self.params.valid_after)

    def on_second_chance(self, msg: SecondChance, now: int) -> list:
        if msg.missing != self.pid or not msg.block.is_valid():
            return []
        if not self.is_valid_second_chance(msg, now):
            return []
        if self.reply_pending:
            return []
        if self.block is None:
            self._deliver(msg.block, now)
            kids = self.tree.children(self.pid)
            if self.role is Role.INTERNAL and kids:
                # late block: hand it down, aggregate the children and answer with the subtree vote
                self.replied = True
                self.reply_pending = True
                return [Send(c, Proposal(msg.block)) for c in kids] + [
                    SetTimer("aggregation", self.params.aggregation_timer(1))]
        elif self.block_digest != msg.block.digest:
            return []
        self.replied = True
        if self.ack is not None:
            reply = self.ack
        elif self.sent_vote is not None:
            reply = self.sent_vote
        else:
            reply = sigagg.aggregate([(self._own(), 1)])
        return [Send(self.tree.root, SecondChanceReply(reply))]

    def handle(self, src: int, msg: Message, now: int) -> list:
        if isinstance(msg, Proposal):
            return self.on_proposal(msg.block, now)
        if isinstance(msg, Vote):
            if self.role is Role.ROOT:
                return self.on_subtree_vote(src, msg.agg, now)
            return self.on_child_vote(src, msg.agg)
        if isinstance(msg, Ack):
            return self.on_ack(src, msg.agg)
        if isinstance(msg, SecondChance):
            return self.on_second_chance(msg, now)
        if isinstance(msg, SecondChanceReply):
            return self.on_second_chance_reply(src, msg.agg)
        raise TypeError(f"unknown message {msg!r}")
