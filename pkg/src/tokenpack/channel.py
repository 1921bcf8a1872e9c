"""Packet-level erasure channel: seeded traces, receive path, and an
operational similarity estimate that cross-checks the analytic estimator."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .ats import AtsResult, ErasureChannelParams, _stderr
from .encoder import EmbeddingProvider, cosine
from .seeding import RngLike, as_generator
from .tokens import Packet, PacketGroup, TokenMessage, reconstruct


@dataclass(frozen=True)
class ChannelTrace:
    """Outcome of one transmission: erasure flag per packet slot."""

    erased: tuple[bool, ...]
    seed: int | None
    p: float

    @property
    def N(self) -> int:
        return len(self.erased)


def transmit(group: PacketGroup, channel: ErasureChannelParams, seed: RngLike) -> ChannelTrace:
    """Erase each packet independently with probability p.

    Deterministic given an int seed; passing a Generator threads one stream
    across successive calls (each call consumes N uniforms).
    """
    rng = as_generator(seed)
    erased = tuple(bool(u < channel.p) for u in rng.random(group.N))
    return ChannelTrace(erased, seed if isinstance(seed, int) else None, channel.p)


def receive(group: PacketGroup, trace: ChannelTrace, message: TokenMessage) -> TokenMessage:
    """Reconstruct the message from the packets that survived the trace."""
    if trace.N != group.N:
        raise ValueError(f"trace covers {trace.N} packets, group has {group.N}")
    survivors: list[Packet] = [
        pkt for pkt, gone in zip(group.packets, trace.erased) if not gone
    ]
    return reconstruct(message, survivors)


def simulate_ats(
    group: PacketGroup,
    message: TokenMessage,
    channel: ErasureChannelParams,
    provider: EmbeddingProvider,
    trials: int,
    seed: RngLike = 0,
) -> AtsResult:
    """Estimate average similarity by actually running transmit/receive.

    Same estimator as the analytic Monte-Carlo path but through the channel
    objects; with the same seed both produce identical values, which makes
    them mutual oracles.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = as_generator(seed)
    values = np.empty(trials)
    for t in range(trials):
        trace = transmit(group, channel, rng)
        received = receive(group, trace, message)
        values[t] = cosine(provider, received, message)
    return AtsResult(float(np.mean(values)), "monte_carlo", _stderr(values), 0)


def write_trace_log(traces: Iterable[ChannelTrace], path: "str | Path") -> None:
    """Audit log: one CSV row per (trial, packet slot) with its erasure flag."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial", "packet_index", "erased"])
        for trial, trace in enumerate(traces):
            for idx, gone in enumerate(trace.erased):
                writer.writerow([trial, idx, int(gone)])


def read_trace_log(path: "str | Path", p: float) -> list[ChannelTrace]:
    """Rebuild traces from an audit log (inverse of write_trace_log)."""
    by_trial: dict[int, dict[int, bool]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            by_trial.setdefault(int(row["trial"]), {})[int(row["packet_index"])] = bool(
                int(row["erased"])
            )
    traces = []
    for trial in sorted(by_trial):
        slots = by_trial[trial]
        traces.append(ChannelTrace(tuple(slots[i] for i in sorted(slots)), None, p))
    return traces
