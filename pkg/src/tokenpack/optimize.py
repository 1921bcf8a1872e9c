"""Packet aggregation strategies.

Five ways to pick a partition of the message into size-M packets:

* ``random_pa``   - uniform random partition, no evaluation.
* ``full_search`` - enumerate all partitions, score each exactly; the optimum.
* ``ga``          - genetic algorithm over partitions with cut-and-repair
                    crossover and token-swap mutation; exact fitness.
* ``gbeam``       - beam of the best B groups, each expanded by P/B mutated
                    children per iteration; exact fitness.
* ``sempa_look``  - level-wise lookahead: at each level sample P candidate
                    packets from the leftover tokens, extend each with up to k
                    disjoint future packets sampled from what would remain,
                    keep the candidate with the best average surrogate score.

The first four pay 2^N encodings per evaluated group; the lookahead strategy
pays one encoding per scored packet, so its total budget is
sum over levels of P*(k_level+1).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .ats import (
    DEFAULT_SUBSET_CAP,
    AtsResult,
    ErasureChannelParams,
    ats_exact,
    ats_monte_carlo,
)
from .encoder import EmbeddingProvider, EmptyTextPolicy, cosine_vectors
from .seeding import RngLike, as_generator
from .surrogate import SurrogateKind, surrogate_score
from .tokens import (
    DEFAULT_ENUMERATION_CAP,
    NonDivisibleLength,
    Packet,
    PacketGroup,
    TokenMessage,
    enumerate_partitions,
    group_of,
    validate_partition,
)

STRATEGIES = ("random", "full", "ga", "gbeam", "sempa_look")


@dataclass
class OptimizerConfig:
    strategy: str = "sempa_look"
    P: int = 10  # candidates per level / population size
    G: int = 5  # generations or beam iterations
    B: int = 5  # beam width; must divide P
    k: int = 4  # lookahead depth
    mutation_rate: float = 0.3
    seed: int = 0
    surrogate: SurrogateKind = SurrogateKind.RSS

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if min(self.P, self.G, self.B) < 1 or self.k < 0:
            raise ValueError("P, G, B must be positive and k non-negative")
        if not 0.0 <= self.mutation_rate <= 1.0:
            raise ValueError("mutation_rate must be in [0, 1]")


@dataclass
class OptimizerReport:
    group: PacketGroup
    objective_value: float
    encoder_steps: int
    wall_time: float
    # initial-population evaluations are accounted apart from the per-
    # generation budget so measured steps line up with the G*P*2^N form
    init_encoder_steps: int = 0
    history: list[float] = field(default_factory=list)


Blocks = list[tuple[int, ...]]


def _to_group(blocks: Blocks) -> PacketGroup:
    return group_of(blocks)


def _from_group(group: PacketGroup) -> Blocks:
    return [p.sorted_positions() for p in group.packets]


def _random_blocks(rng: np.random.Generator, K: int, M: int) -> Blocks:
    perm = rng.permutation(K)
    return [tuple(sorted(int(x) for x in perm[i : i + M])) for i in range(0, K, M)]


def random_pa(message: TokenMessage, M: int, seed: RngLike = 0) -> OptimizerReport:
    """Uniformly random canonical partition; costs no encodings."""
    if message.K % M != 0:
        raise NonDivisibleLength(f"K={message.K} is not divisible by M={M}")
    start = time.perf_counter()
    group = _to_group(_random_blocks(as_generator(seed), message.K, M)).canonical()
    validate_partition(group, message.K, M)
    return OptimizerReport(group, math.nan, 0, time.perf_counter() - start)


def full_search(
    message: TokenMessage,
    M: int,
    channel: ErasureChannelParams,
    provider: EmbeddingProvider,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> OptimizerReport:
    """Exhaustive optimum; ties go to the first partition in canonical order."""
    start = time.perf_counter()
    before = provider.steps
    best_group: PacketGroup | None = None
    best_value = -math.inf
    for group in enumerate_partitions(message.K, M, cap=cap):
        value = ats_exact(group, message, channel, provider).value
        if value > best_value:
            best_value = value
            best_group = group
    assert best_group is not None
    return OptimizerReport(
        best_group, best_value, provider.steps - before, time.perf_counter() - start
    )


# --- genetic algorithm -------------------------------------------------------


def _repair(blocks: Blocks, K: int, rng: np.random.Generator) -> Blocks:
    """Fix duplicate tokens after crossover.

    Walk packets in order; any token already seen marks a slot, and the
    missing tokens are shuffled into those slots. Minimal perturbation and
    always produces a valid partition.
    """
    rows = [list(b) for b in blocks]
    seen: set[int] = set()
    slots: list[tuple[int, int]] = []
    for bi, row in enumerate(rows):
        for mi, tok in enumerate(row):
            if tok in seen:
                slots.append((bi, mi))
            else:
                seen.add(tok)
    if not slots:
        return [tuple(sorted(row)) for row in rows]
    missing = [t for t in range(K) if t not in seen]
    rng.shuffle(missing)
    for (bi, mi), tok in zip(slots, missing):
        rows[bi][mi] = tok
    return [tuple(sorted(row)) for row in rows]


def _crossover(p1: Blocks, p2: Blocks, K: int, rng: np.random.Generator) -> tuple[Blocks, Blocks]:
    n = len(p1)
    if n < 2:
        return list(p1), list(p2)
    cut = int(rng.integers(1, n))
    c1 = _repair(list(p1[:cut]) + list(p2[cut:]), K, rng)
    c2 = _repair(list(p2[:cut]) + list(p1[cut:]), K, rng)
    return c1, c2


def _mutate(blocks: Blocks, rng: np.random.Generator) -> Blocks:
    """Swap one token between two distinct packets; sizes are preserved."""
    n = len(blocks)
    if n < 2:
        return list(blocks)
    m, other = (int(x) for x in rng.choice(n, size=2, replace=False))
    rows = [list(b) for b in blocks]
    wi = int(rng.integers(len(rows[m])))
    wj = int(rng.integers(len(rows[other])))
    rows[m][wi], rows[other][wj] = rows[other][wj], rows[m][wi]
    return [tuple(sorted(row)) for row in rows]


def ga_crossover(
    parent1: PacketGroup, parent2: PacketGroup, seed: RngLike
) -> tuple[PacketGroup, PacketGroup]:
    K = sum(p.M for p in parent1.packets)
    rng = as_generator(seed)
    c1, c2 = _crossover(_from_group(parent1), _from_group(parent2), K, rng)
    return _to_group(c1), _to_group(c2)


def ga_mutate(group: PacketGroup, seed: RngLike) -> PacketGroup:
    return _to_group(_mutate(_from_group(group), as_generator(seed)))


class _FitnessEvaluator:
    """Exact-ATS fitness with optional per-run deduplication.

    Deduplication shares one evaluation among identical chromosomes; it is
    disabled whenever the provider cache is off so measured encodings match
    the G*P*2^N budget exactly.
    """

    def __init__(
        self,
        message: TokenMessage,
        channel: ErasureChannelParams,
        provider: EmbeddingProvider,
    ) -> None:
        self.message = message
        self.channel = channel
        self.provider = provider
        self.dedup = provider.cache_enabled
        self._memo: dict[tuple, float] = {}

    def __call__(self, blocks: Blocks) -> float:
        group = _to_group(blocks)
        key = group.key()
        if self.dedup and key in self._memo:
            return self._memo[key]
        value = ats_exact(group, self.message, self.channel, self.provider).value
        if self.dedup:
            self._memo[key] = value
        return value


def _tournament(fits: list[float], rng: np.random.Generator) -> int:
    i, j = (int(x) for x in rng.integers(0, len(fits), size=2))
    return i if fits[i] >= fits[j] else j


def ga(
    message: TokenMessage,
    M: int,
    channel: ErasureChannelParams,
    provider: EmbeddingProvider,
    config: OptimizerConfig,
) -> OptimizerReport:
    """Selection, cut-and-repair crossover, swap mutation; exact fitness.

    The best chromosome survives each generation unchanged (elitism), so the
    best value in ``history`` never decreases.
    """
    if config.P < 2:
        raise ValueError("GA needs a population of at least 2")
    if message.K % M != 0:
        raise NonDivisibleLength(f"K={message.K} is not divisible by M={M}")
    start = time.perf_counter()
    rng = as_generator(config.seed)
    fitness = _FitnessEvaluator(message, channel, provider)

    before = provider.steps
    pop = [_random_blocks(rng, message.K, M) for _ in range(config.P)]
    fits = [fitness(b) for b in pop]
    init_steps = provider.steps - before

    best_idx = max(range(config.P), key=lambda i: fits[i])
    best_blocks, best_fit = pop[best_idx], fits[best_idx]
    history = [best_fit]

    gen_before = provider.steps
    for _ in range(config.G):
        elite = pop[max(range(config.P), key=lambda i: fits[i])]
        children: list[Blocks] = [list(elite)]
        while len(children) < config.P:
            pa = pop[_tournament(fits, rng)]
            pb = pop[_tournament(fits, rng)]
            for child in _crossover(pa, pb, message.K, rng):
                if rng.random() < config.mutation_rate:
                    child = _mutate(child, rng)
                if len(children) < config.P:
                    children.append(child)
        pop = children
        fits = [fitness(b) for b in pop]
        gen_best = max(range(config.P), key=lambda i: fits[i])
        if fits[gen_best] > best_fit:
            best_fit, best_blocks = fits[gen_best], pop[gen_best]
        history.append(best_fit)

    group = _to_group(best_blocks).canonical()
    validate_partition(group, message.K, M)
    return OptimizerReport(
        group,
        best_fit,
        provider.steps - gen_before,
        time.perf_counter() - start,
        init_encoder_steps=init_steps,
        history=history,
    )


def gbeam(
    message: TokenMessage,
    M: int,
    channel: ErasureChannelParams,
    provider: EmbeddingProvider,
    config: OptimizerConfig,
) -> OptimizerReport:
    """Beam over packet groups: keep the top B, expand each with P/B mutants.

    Parents stay in the selection pool, so the beam's best value never
    decreases.
    """
    if config.P % config.B != 0:
        raise ValueError(f"beam width B={config.B} must divide P={config.P}")
    if message.K % M != 0:
        raise NonDivisibleLength(f"K={message.K} is not divisible by M={M}")
    start = time.perf_counter()
    rng = as_generator(config.seed)
    fitness = _FitnessEvaluator(message, channel, provider)
    per_parent = config.P // config.B

    before = provider.steps
    beam = [_random_blocks(rng, message.K, M) for _ in range(config.B)]
    beam_fits = [fitness(b) for b in beam]
    init_steps = provider.steps - before

    order = sorted(range(config.B), key=lambda i: -beam_fits[i])
    beam = [beam[i] for i in order]
    beam_fits = [beam_fits[i] for i in order]
    best_blocks, best_fit = beam[0], beam_fits[0]
    history = [best_fit]

    gen_before = provider.steps
    for _ in range(config.G):
        children = [
            _mutate(parent, rng) for parent in beam for _ in range(per_parent)
        ]
        child_fits = [fitness(b) for b in children]
        pool = list(zip(beam_fits, beam)) + list(zip(child_fits, children))
        pool.sort(key=lambda pair: -pair[0])
        beam_fits = [f for f, _ in pool[: config.B]]
        beam = [b for _, b in pool[: config.B]]
        if beam_fits[0] > best_fit:
            best_fit, best_blocks = beam_fits[0], beam[0]
        history.append(best_fit)

    group = _to_group(best_blocks).canonical()
    validate_partition(group, message.K, M)
    return OptimizerReport(
        group,
        best_fit,
        provider.steps - gen_before,
        time.perf_counter() - start,
        init_encoder_steps=init_steps,
        history=history,
    )


# --- lookahead search --------------------------------------------------------


def random_disjoint(
    residual: list[int], M: int, k: int, rng: np.random.Generator
) -> list[frozenset[int]]:
    """Sample k mutually disjoint size-M packets from a token pool."""
    if k * M > len(residual):
        raise ValueError(f"cannot draw {k} disjoint packets of {M} from {len(residual)} tokens")
    perm = rng.permutation(len(residual))
    return [
        frozenset(residual[int(j)] for j in perm[i * M : (i + 1) * M]) for i in range(k)
    ]


def _psi_untracked(
    positions: frozenset[int],
    message: TokenMessage,
    provider: EmbeddingProvider,
    kind: SurrogateKind,
) -> float:
    """Surrogate via the uncounted reference path (diagnostics only)."""
    if kind is SurrogateKind.RSS:
        text = message.subtext(frozenset(range(message.K)) - positions)
    else:
        text = message.subtext(positions)
    if text == "" and provider.empty_policy is EmptyTextPolicy.ZERO:
        return 0.0
    return cosine_vectors(provider.reference(text), provider.reference(message.text))


def sempa_look(
    message: TokenMessage,
    M: int,
    provider: EmbeddingProvider,
    config: OptimizerConfig,
) -> OptimizerReport:
    """Level-wise lookahead aggregation.

    One packet is fixed per level. Candidates are drawn with replacement
    across the P slots; each candidate's future is previewed by drawing
    min(k, remaining_packets - 1) disjoint packets from the tokens it would
    leave behind, and the candidate with the best average surrogate wins
    (first sampled wins ties). The last packet is forced, so the whole run
    costs sum over levels 1..N-1 of P*(k_level+1) encodings.
    """
    if message.K % M != 0:
        raise NonDivisibleLength(f"K={message.K} is not divisible by M={M}")
    start = time.perf_counter()
    rng = as_generator(config.seed)
    kind = config.surrogate
    before = provider.steps

    leftover = list(range(message.K))
    chosen: list[frozenset[int]] = []
    psi_seen: dict[frozenset[int], float] = {}

    while len(leftover) > M:
        kl = min(config.k, len(leftover) // M - 1)
        candidates = []
        for _ in range(config.P):
            pick = rng.choice(len(leftover), size=M, replace=False)
            candidates.append(frozenset(leftover[int(j)] for j in pick))
        lookaheads = []
        for cand in candidates:
            residual = [t for t in leftover if t not in cand]
            lookaheads.append(random_disjoint(residual, M, kl, rng))

        best_idx = -1
        best_score = -math.inf
        for i, cand in enumerate(candidates):
            total = surrogate_score(kind, Packet(cand), message, provider)
            psi_seen[cand] = total
            for future in lookaheads[i]:
                psi = surrogate_score(kind, Packet(future), message, provider)
                psi_seen[future] = psi
                total += psi
            score = total / (kl + 1)
            if score > best_score:
                best_score = score
                best_idx = i

        chosen.append(candidates[best_idx])
        selected = candidates[best_idx]
        leftover = [t for t in leftover if t not in selected]

    chosen.append(frozenset(leftover))
    steps = provider.steps - before

    # P2 objective: mean per-packet surrogate. Every selected packet was
    # scored during its level; the forced last packet was scored as the
    # surviving lookahead of the winning candidate whenever k >= 1, and is
    # filled in through the uncounted path otherwise.
    psi_values = [
        psi_seen.get(c, None) for c in chosen
    ]
    objective = sum(
        v if v is not None else _psi_untracked(c, message, provider, kind)
        for c, v in zip(chosen, psi_values)
    ) / len(chosen)

    group = _to_group([tuple(sorted(c)) for c in chosen]).canonical()
    validate_partition(group, message.K, M)
    return OptimizerReport(group, objective, steps, time.perf_counter() - start)


def evaluate_report(
    report: OptimizerReport,
    message: TokenMessage,
    channel: ErasureChannelParams,
    provider: EmbeddingProvider,
    samples: int = 20000,
    seed: RngLike = 0,
    exact_cap: int = DEFAULT_SUBSET_CAP,
) -> AtsResult:
    """Post-hoc expected similarity of any strategy's output.

    Exact when 2^N enumeration fits the cap, Monte-Carlo otherwise, so
    cross-strategy comparisons never mix objectives.
    """
    if report.group.N <= exact_cap:
        return ats_exact(report.group, message, channel, provider, subset_cap=exact_cap)
    return ats_monte_carlo(report.group, message, channel, provider, samples, seed)


def run_strategy(
    strategy: str,
    message: TokenMessage,
    M: int,
    channel: ErasureChannelParams,
    provider: EmbeddingProvider,
    config: OptimizerConfig,
    enumeration_cap: int = DEFAULT_ENUMERATION_CAP,
) -> OptimizerReport:
    """Dispatch a strategy by name (the names the sweep harness uses)."""
    if strategy == "random":
        return random_pa(message, M, seed=config.seed)
    if strategy == "full":
        return full_search(message, M, channel, provider, cap=enumeration_cap)
    if strategy == "ga":
        return ga(message, M, channel, provider, config)
    if strategy == "gbeam":
        return gbeam(message, M, channel, provider, config)
    if strategy == "sempa_look":
        return sempa_look(message, M, provider, config)
    raise ValueError(f"unknown strategy {strategy!r}")
