"""Modeled indivisible multi-signatures with integer multiplicities.

Signatures are bookkeeping over 32-byte digests: an aggregate records which
signer contributed how many times.  The API only ever combines signatures;
nothing splits an aggregate back into its parts, which is how the
indivisibility assumption is enforced here.
"""
from __future__ import annotations

import hashlib
import struct
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass

DIGEST_SIZE = 32

MessageDigest = bytes
SignerId = int


def digest(data: bytes) -> MessageDigest:
    """SHA-256, the one hash used for block and QC identities."""
    return hashlib.sha256(data).digest()


class SignatureError(ValueError):
    pass


class MixedMessages(SignatureError):
    pass


class EmptyInput(SignatureError):
    pass


class MultiplicityVector(Mapping):
    """Sparse, immutable map signer -> count.  Zero counts are dropped."""

    __slots__ = ("_items", "_map", "_hash")

    def __init__(self, entries: Mapping[int, int] | Iterable[tuple[int, int]] = ()):
        if isinstance(entries, Mapping):
            entries = entries.items()
        acc: dict[int, int] = {}
        for signer, count in entries:
            signer, count = int(signer), int(count)
            if signer < 0:
                raise ValueError(f"negative signer id {signer}")
            if count < 0:
                raise ValueError(f"negative multiplicity for signer {signer}")
            if count:
                acc[signer] = acc.get(signer, 0) + count
        self._items = tuple(sorted(acc.items()))
        self._map = dict(self._items)
        self._hash = None

    def __getitem__(self, signer: int) -> int:
        return self._map[signer]

    def __contains__(self, signer) -> bool:
        return signer in self._map

    def get(self, signer, default=0):
        return self._map.get(signer, default)

    def __iter__(self) -> Iterator[int]:
        return (s for s, _ in self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __eq__(self, other):
        if isinstance(other, MultiplicityVector):
            return self._items == other._items
        if isinstance(other, Mapping):
            return self == MultiplicityVector(other)
        return NotImplemented

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(self._items)
        return self._hash

    def __repr__(self):
        body = ", ".join(f"{s}: {c}" for s, c in self._items)
        return f"MultiplicityVector({{{body}}})"

    def items(self):
        return self._items

    @property
    def signers(self) -> frozenset[int]:
        return frozenset(self._map)

    def scaled(self, factor: int) -> MultiplicityVector:
        return MultiplicityVector((s, c * factor) for s, c in self._items)

    def __add__(self, other: MultiplicityVector) -> MultiplicityVector:
        return MultiplicityVector(list(self._items) + list(other.items()))

    def to_bytes(self) -> bytes:
        """Ascending signer order, (u32 id, u32 count) little-endian pairs."""
        return b"".join(struct.pack("<II", s, c) for s, c in self._items)

    @classmethod
    def from_bytes(cls, data: bytes) -> MultiplicityVector:
        if len(data) % 8:
            raise ValueError("multiplicity encoding must be a multiple of 8 bytes")
        pairs = [struct.unpack_from("<II", data, off) for off in range(0, len(data), 8)]
        ids = [p[0] for p in pairs]
        if ids != sorted(set(ids)) or any(c == 0 for _, c in pairs):
            raise ValueError("non-canonical multiplicity encoding")
        return cls(pairs)

    def to_text(self) -> str:
        return ";".join(f"{s}:{c}" for s, c in self._items)


@dataclass(frozen=True)
class Signature:
    signer: int
    message: MessageDigest

    def __post_init__(self):
        if len(self.message) != DIGEST_SIZE:
            raise ValueError("message must be a 32-byte digest")


@dataclass(frozen=True)
class AggregateSignature:
    message: MessageDigest
    multiplicities: MultiplicityVector

    def __post_init__(self):
        if not self.multiplicities:
            raise EmptyInput("aggregate needs at least one signer")

    @property
    def signers(self) -> frozenset[int]:
        return self.multiplicities.signers

    def __contains__(self, signer: int) -> bool:
        return signer in self.multiplicities


def sign(signer: int, message: MessageDigest) -> Signature:
    return Signature(int(signer), bytes(message))


def aggregate(parts) -> AggregateSignature:
    """Combine ``(signature_or_aggregate, exponent)`` pairs.

    The resulting count of a signer is the exponent-weighted sum of its
    counts across parts.
    """
    parts = list(parts)
    if not parts:
        raise EmptyInput("nothing to aggregate")
    message = None
    acc: list[tuple[int, int]] = []
    for part, exponent in parts:
        if int(exponent) < 1:
            raise ValueError(f"exponent must be >= 1, got {exponent}")
        if message is None:
            message = part.message
        elif part.message != message:
            raise MixedMessages("parts sign different messages")
        if isinstance(part, Signature):
            acc.append((part.signer, exponent))
        else:
            acc.extend((s, c * exponent) for s, c in part.multiplicities.items())
    return AggregateSignature(message, MultiplicityVector(acc))


def verify(agg: AggregateSignature, expected: Mapping[int, int], message: MessageDigest) -> bool:
    if not expected:
        return False
    return agg.message == message and agg.multiplicities == MultiplicityVector(expected)


def build(multiplicities: Mapping[int, int], message: MessageDigest) -> AggregateSignature:
    """Aggregate fresh signatures so that the result carries ``multiplicities``."""
    return aggregate((sign(s, message), c) for s, c in MultiplicityVector(multiplicities).items())
