"""Per-packet surrogate scores that stand in for the full expectation.

Scoring a whole group exactly costs 2^N encodings; a surrogate charges one
encoding per packet. Two variants:

* TSS rates a packet by its own similarity to the message, phi(C, W) -
  how much a lone surviving packet is worth.
* RSS rates a packet by what remains if it is lost, phi(W\\C, W) - how well
  the rest of the message covers for it.

The mean surrogate over a full partition is the decoupled objective the
lookahead optimizer maximizes; ``psi_average`` extends a candidate's score
with scores of sampled future packets.
"""

from __future__ import annotations

from enum import Enum
from typing import Sequence

from .encoder import EmbeddingProvider, EmptyTextPolicy, cosine_vectors
from .tokens import Packet, PacketGroup, TokenMessage


class OverlappingLookahead(ValueError):
    """Candidate and lookahead packets must be pairwise disjoint."""


class SurrogateKind(Enum):
    TSS = "tss"
    RSS = "rss"


def _score_text(text: str, message: TokenMessage, provider: EmbeddingProvider) -> float:
    if text == "" and provider.empty_policy is EmptyTextPolicy.ZERO:
        return 0.0
    vec = provider.embed_text(text)
    ref = provider.reference(message.text)
    return cosine_vectors(vec, ref)


def tss(pkt: Packet, message: TokenMessage, provider: EmbeddingProvider) -> float:
    """Similarity of the packet's own reconstruction to the full message."""
    return _score_text(message.subtext(pkt.positions), message, provider)


def rss(pkt: Packet, message: TokenMessage, provider: EmbeddingProvider) -> float:
    """Similarity of the message with this packet removed to the full message."""
    comp = frozenset(range(message.K)) - pkt.positions
    return _score_text(message.subtext(comp), message, provider)


def surrogate_score(
    kind: SurrogateKind, pkt: Packet, message: TokenMessage, provider: EmbeddingProvider
) -> float:
    return (tss if kind is SurrogateKind.TSS else rss)(pkt, message, provider)


def psi_average(
    candidate: Packet,
    lookahead: Sequence[Packet],
    message: TokenMessage,
    provider: EmbeddingProvider,
    kind: SurrogateKind = SurrogateKind.RSS,
) -> float:
    """Mean surrogate of a candidate packet and its sampled future packets."""
    used = set(candidate.positions)
    for pkt in lookahead:
        if used & pkt.positions:
            raise OverlappingLookahead("lookahead packets overlap the candidate or each other")
        used |= pkt.positions
    total = surrogate_score(kind, candidate, message, provider)
    for pkt in lookahead:
        total += surrogate_score(kind, pkt, message, provider)
    return total / (len(lookahead) + 1)


def mean_surrogate(
    group: PacketGroup,
    message: TokenMessage,
    provider: EmbeddingProvider,
    kind: SurrogateKind = SurrogateKind.RSS,
) -> float:
    """The decoupled objective: mean per-packet surrogate over a partition."""
    return sum(surrogate_score(kind, p, message, provider) for p in group.packets) / group.N
