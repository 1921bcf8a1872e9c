"""Message, packet and packet-group data model, plus the wire format.

A message is an ordered list of tokens addressed by 0-based position. A packet
is a fixed-size set of positions; a packet group is an ordered list of packets
that partitions the message. Reconstruction from any subset of packets sorts
the surviving positions, so token order is always recoverable from headers.
"""

from __future__ import annotations

import itertools
import math
import struct
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

#: Sentinel surface appended by the opt-in padding extension; excluded from
#: similarity texts so padded and unpadded messages embed identically.
PAD_TOKEN = "<pad>"

DEFAULT_ENUMERATION_CAP = 16


class TokenError(ValueError):
    """Base class for message/packet construction errors."""


class NonDivisibleLength(TokenError):
    """Message length is not a multiple of the packet size."""


class UnevenAssignment(TokenError):
    """A packet label does not occur exactly M times in an assignment."""


class TooLarge(TokenError):
    """Requested enumeration exceeds the configured cap."""


class OutOfDictionary(TokenError):
    """A token surface is missing from the shared dictionary."""


class InvalidPartition(TokenError):
    """A packet group violates the disjoint-cover or size constraint."""


@dataclass(frozen=True)
class TokenMessage:
    """An ordered token sequence; position i holds ``tokens[i]``."""

    tokens: tuple[str, ...]

    def __post_init__(self) -> None:
        if any((not isinstance(t, str)) or t == "" for t in self.tokens):
            raise TokenError("token surfaces must be non-empty strings")

    @property
    def K(self) -> int:
        return len(self.tokens)

    @property
    def text(self) -> str:
        """Tokens joined by single spaces, padding sentinels dropped."""
        return " ".join(t for t in self.tokens if t != PAD_TOKEN)

    def subtext(self, positions: Iterable[int]) -> str:
        """Reconstructed text for a set of positions (ascending order)."""
        return " ".join(
            self.tokens[i] for i in sorted(positions) if self.tokens[i] != PAD_TOKEN
        )

    def padded(self, m: int) -> "TokenMessage":
        """Append PAD_TOKEN sentinels until the length is a multiple of ``m``."""
        if m <= 0:
            raise TokenError("packet size must be positive")
        rem = self.K % m
        if rem == 0:
            return self
        return TokenMessage(self.tokens + (PAD_TOKEN,) * (m - rem))


@dataclass(frozen=True)
class Packet:
    """A set of token positions transmitted as one unit."""

    positions: frozenset[int]

    def __post_init__(self) -> None:
        if not self.positions:
            raise TokenError("a packet must contain at least one position")
        if any((not isinstance(i, int)) or i < 0 for i in self.positions):
            raise TokenError("packet positions must be non-negative integers")

    @property
    def M(self) -> int:
        return len(self.positions)

    def sorted_positions(self) -> tuple[int, ...]:
        return tuple(sorted(self.positions))


def packet(*positions: int) -> Packet:
    return Packet(frozenset(positions))


@dataclass(frozen=True)
class PacketGroup:
    """An ordered list of packets; valid groups partition the whole message."""

    packets: tuple[Packet, ...]

    @property
    def N(self) -> int:
        return len(self.packets)

    @property
    def M(self) -> int:
        return self.packets[0].M if self.packets else 0

    def all_positions(self) -> frozenset[int]:
        out: set[int] = set()
        for p in self.packets:
            out |= p.positions
        return frozenset(out)

    def canonical(self) -> "PacketGroup":
        """Blocks ordered by smallest member; membership is unchanged."""
        return PacketGroup(tuple(sorted(self.packets, key=lambda p: min(p.positions))))

    def key(self) -> tuple[tuple[int, ...], ...]:
        """Hashable canonical form, used for deduplication."""
        return tuple(sorted(p.sorted_positions() for p in self.packets))


def group_of(blocks: Sequence[Iterable[int]]) -> PacketGroup:
    return PacketGroup(tuple(Packet(frozenset(b)) for b in blocks))


def validate_partition(group: PacketGroup, K: int, M: int | None = None) -> None:
    """The single disjoint-cover / uniform-size validator.

    Raises InvalidPartition unless the packets are pairwise disjoint, cover
    exactly 0..K-1, and all have the same size (``M`` when given).
    """
    if not group.packets:
        raise InvalidPartition("empty packet group")
    sizes = {p.M for p in group.packets}
    if len(sizes) != 1:
        raise InvalidPartition(f"packet sizes differ: {sorted(sizes)}")
    m = sizes.pop()
    if M is not None and m != M:
        raise InvalidPartition(f"packet size {m} != required {M}")
    total = sum(p.M for p in group.packets)
    union = group.all_positions()
    if len(union) != total:
        raise InvalidPartition("packets overlap")
    if union != frozenset(range(K)):
        raise InvalidPartition("packets do not cover positions 0..K-1 exactly")


def is_valid_partition(group: PacketGroup, K: int, M: int | None = None) -> bool:
    try:
        validate_partition(group, K, M)
    except InvalidPartition:
        return False
    return True


def make_partition(message: TokenMessage, assignment: Sequence[int], M: int) -> PacketGroup:
    """Build a packet group from a per-position packet label.

    ``assignment[i]`` is the packet index of position i; every label must
    occur exactly M times. Packets are ordered by label and the result is
    canonicalized.
    """
    K = message.K
    if M <= 0:
        raise TokenError("packet size must be positive")
    if K % M != 0:
        raise NonDivisibleLength(f"K={K} is not divisible by M={M}")
    if len(assignment) != K:
        raise UnevenAssignment(f"assignment length {len(assignment)} != K={K}")
    by_label: dict[int, list[int]] = {}
    for pos, label in enumerate(assignment):
        by_label.setdefault(label, []).append(pos)
    for label, members in by_label.items():
        if len(members) != M:
            raise UnevenAssignment(f"packet {label} has {len(members)} tokens, expected {M}")
    blocks = [by_label[label] for label in sorted(by_label)]
    group = group_of(blocks).canonical()
    validate_partition(group, K, M)
    return group


def reconstruct(message: TokenMessage, received: Iterable[Packet]) -> TokenMessage:
    """Merge received packets back into the token subsequence they cover.

    Positions are sorted ascending, which realizes order recovery from packet
    headers; an empty set of packets yields the empty message.
    """
    positions: set[int] = set()
    for p in received:
        for i in p.positions:
            if i >= message.K:
                raise TokenError(f"position {i} outside message of length {message.K}")
        positions |= p.positions
    return TokenMessage(tuple(message.tokens[i] for i in sorted(positions)))


def enumerate_partitions(
    K: int, M: int, cap: int = DEFAULT_ENUMERATION_CAP
) -> Iterator[PacketGroup]:
    """Yield every partition of 0..K-1 into size-M blocks exactly once.

    Canonical order: the first block always contains the smallest unassigned
    position, so no partition is emitted twice. Total count is
    K! / ((M!)^N * N!).
    """
    if M <= 0:
        raise TokenError("packet size must be positive")
    if K % M != 0:
        raise NonDivisibleLength(f"K={K} is not divisible by M={M}")
    if K > cap:
        raise TooLarge(f"K={K} exceeds enumeration cap {cap}")

    def rec(remaining: tuple[int, ...], blocks: list[tuple[int, ...]]) -> Iterator[PacketGroup]:
        if not remaining:
            yield group_of(blocks)
            return
        anchor, rest = remaining[0], remaining[1:]
        for combo in itertools.combinations(rest, M - 1):
            block = (anchor,) + combo
            left = tuple(x for x in rest if x not in combo)
            blocks.append(block)
            yield from rec(left, blocks)
            blocks.pop()

    yield from rec(tuple(range(K)), [])


def partition_count(K: int, M: int) -> int:
    """Closed-form number of partitions into size-M blocks."""
    if K % M != 0:
        raise NonDivisibleLength(f"K={K} is not divisible by M={M}")
    n = K // M
    return math.factorial(K) // (math.factorial(M) ** n * math.factorial(n))


# --- wire format ------------------------------------------------------------
#
# Little-endian: u32 message_id, u16 packet_index, u16 entry count, then one
# (u16 position, u32 dict_index) pair per entry, entries ascending by position.

_HEADER = struct.Struct("<IHH")
_ENTRY = struct.Struct("<HI")


@dataclass(frozen=True)
class WirePacket:
    message_id: int
    packet_index: int
    entries: tuple[tuple[int, int], ...]  # (position, dict_index), ascending

    def to_bytes(self) -> bytes:
        buf = bytearray(_HEADER.pack(self.message_id, self.packet_index, len(self.entries)))
        for pos, idx in self.entries:
            buf += _ENTRY.pack(pos, idx)
        return bytes(buf)

    @classmethod
    def from_bytes(cls, data: bytes) -> "WirePacket":
        message_id, packet_index, count = _HEADER.unpack_from(data, 0)
        entries = []
        offset = _HEADER.size
        for _ in range(count):
            pos, idx = _ENTRY.unpack_from(data, offset)
            entries.append((pos, idx))
            offset += _ENTRY.size
        return cls(message_id, packet_index, tuple(entries))


def encode_wire(
    pkt: Packet,
    message: TokenMessage,
    dictionary: Sequence[str],
    message_id: int = 0,
    packet_index: int = 0,
) -> WirePacket:
    index = {surface: i for i, surface in enumerate(dictionary)}
    entries = []
    for pos in pkt.sorted_positions():
        surface = message.tokens[pos]
        if surface not in index:
            raise OutOfDictionary(f"token {surface!r} not in dictionary")
        entries.append((pos, index[surface]))
    return WirePacket(message_id, packet_index, tuple(entries))


def decode_wire(wire: WirePacket, dictionary: Sequence[str]) -> list[tuple[int, str]]:
    out = []
    for pos, idx in wire.entries:
        if idx >= len(dictionary):
            raise OutOfDictionary(f"dictionary index {idx} out of range")
        out.append((pos, dictionary[idx]))
    return out
