"""Average token similarity under an i.i.d. packet-erasure channel.

The exact value sums, over every subset H of the packet group, the cosine
between the subset's reconstruction and the original message, weighted by
(1-p)^|H| * p^(N-|H|). The empty subset contributes 0 under the default
empty-text convention. Monte-Carlo estimation and two first-order
approximations (one accurate for small p, one for p near 1) cover regimes
where 2^N enumeration is not affordable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import EmbeddingProvider, EmptyTextPolicy, cosine_vectors
from .seeding import RngLike, as_generator
from .tokens import PacketGroup, TokenMessage, validate_partition

DEFAULT_SUBSET_CAP = 20


class TooManySubsets(ValueError):
    """2^N subset enumeration would exceed the configured cap."""


@dataclass(frozen=True)
class ErasureChannelParams:
    """Per-packet erasure probability, i.i.d. across packets."""

    p: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"erasure probability must be in [0, 1], got {self.p}")


@dataclass(frozen=True)
class AtsResult:
    value: float
    method: str  # exact | monte_carlo | taylor_low_p | taylor_high_p
    stderr: float
    encoder_steps: int


@dataclass(frozen=True)
class LowPTaylorResult(AtsResult):
    """First-order expansion around p=0 with its two addends.

    value = 1 - p * (packet_loss_term + semantic_loss_term), where the packet
    loss term K/M counts transmissions at risk and the semantic loss term
    -sum_C phi(W\\C, W) credits how well the message survives any single loss.
    """

    packet_loss_term: float
    semantic_loss_term: float


def _subset_text(group: PacketGroup, message: TokenMessage, mask: int) -> str:
    positions: set[int] = set()
    for i, pkt in enumerate(group.packets):
        if mask >> i & 1:
            positions |= pkt.positions
    return message.subtext(positions)


def _phi_table(
    group: PacketGroup,
    message: TokenMessage,
    provider: EmbeddingProvider,
    masks: "np.ndarray | range",
) -> np.ndarray:
    """Cosine of each subset reconstruction against the full message.

    The full-message embedding is budgeted once per call; each non-empty
    subset costs one further step when caching is off, so a complete table
    for N packets costs 2^N steps.
    """
    ref = provider.embed_text(message.text)
    table = np.empty(len(masks))
    for j, mask in enumerate(masks):
        mask = int(mask)
        if mask == 0 and provider.empty_policy is EmptyTextPolicy.ZERO:
            table[j] = 0.0
            continue
        vec = provider.embed_text(_subset_text(group, message, mask))
        table[j] = cosine_vectors(vec, ref)
    return table


def subset_weights(N: int, p: float) -> np.ndarray:
    """Probability of each received-subset bitmask, indexed 0..2^N-1."""
    masks = np.arange(1 << N, dtype=np.uint64)
    sizes = np.array([int(m).bit_count() for m in masks])
    return (1.0 - p) ** sizes * p ** (N - sizes)


def ats_exact(
    group: PacketGroup,
    message: TokenMessage,
    channel: ErasureChannelParams,
    provider: EmbeddingProvider,
    subset_cap: int = DEFAULT_SUBSET_CAP,
) -> AtsResult:
    """Exact expectation by enumerating all 2^N received subsets."""
    validate_partition(group, message.K)
    N = group.N
    if N > subset_cap:
        raise TooManySubsets(f"N={N} exceeds subset cap {subset_cap}")
    before = provider.steps
    table = _phi_table(group, message, provider, range(1 << N))
    value = float(np.dot(subset_weights(N, channel.p), table))
    return AtsResult(value, "exact", 0.0, provider.steps - before)


def ats_monte_carlo(
    group: PacketGroup,
    message: TokenMessage,
    channel: ErasureChannelParams,
    provider: EmbeddingProvider,
    samples: int,
    seed: RngLike = 0,
) -> AtsResult:
    """Unbiased estimate of the exact value from i.i.d. erasure draws.

    Trial t consumes the t-th block of N uniforms from the seeded stream,
    the same schedule the channel simulator uses, so the two estimators are
    mutual oracles: identical seeds give identical estimates.
    """
    validate_partition(group, message.K)
    if samples < 1:
        raise ValueError("samples must be >= 1")
    N = group.N
    before = provider.steps
    rng = as_generator(seed)
    survive = rng.random((samples, N)) >= channel.p
    codes = survive @ (1 << np.arange(N, dtype=np.int64))
    present = np.unique(codes)
    table = _phi_table(group, message, provider, present)
    lookup = {int(mask): table[j] for j, mask in enumerate(present)}
    values = np.array([lookup[int(c)] for c in codes])
    return AtsResult(
        float(np.mean(values)),
        "monte_carlo",
        _stderr(values),
        provider.steps - before,
    )


def _stderr(values: np.ndarray) -> float:
    if len(values) < 2:
        return 0.0
    return float(np.std(values, ddof=1) / np.sqrt(len(values)))


def ats_taylor_low_p(
    group: PacketGroup,
    message: TokenMessage,
    channel: ErasureChannelParams,
    provider: EmbeddingProvider,
) -> LowPTaylorResult:
    """1 - p*(K/M - sum_C phi(W\\C, W)); tight as p -> 0."""
    validate_partition(group, message.K)
    before = provider.steps
    ref = provider.reference(message.text)
    residual_sum = 0.0
    for pkt in group.packets:
        comp = frozenset(range(message.K)) - pkt.positions
        text = message.subtext(comp)
        if text == "" and provider.empty_policy is EmptyTextPolicy.ZERO:
            continue
        residual_sum += cosine_vectors(provider.embed_text(text), ref)
    packet_loss = message.K / group.M
    semantic_loss = -residual_sum
    value = 1.0 - channel.p * (packet_loss + semantic_loss)
    return LowPTaylorResult(
        value, "taylor_low_p", 0.0, provider.steps - before, packet_loss, semantic_loss
    )


def ats_taylor_high_p(
    group: PacketGroup,
    message: TokenMessage,
    channel: ErasureChannelParams,
    provider: EmbeddingProvider,
) -> AtsResult:
    """(1-p) * sum_C phi(C, W); tight as p -> 1."""
    validate_partition(group, message.K)
    before = provider.steps
    ref = provider.reference(message.text)
    packet_sum = 0.0
    for pkt in group.packets:
        text = message.subtext(pkt.positions)
        if text == "" and provider.empty_policy is EmptyTextPolicy.ZERO:
            continue
        packet_sum += cosine_vectors(provider.embed_text(text), ref)
    value = (1.0 - channel.p) * packet_sum
    return AtsResult(value, "taylor_high_p", 0.0, provider.steps - before)
