"""Semantic packet aggregation for token communication over erasure channels."""

from .ats import (
    AtsResult,
    ErasureChannelParams,
    LowPTaylorResult,
    TooManySubsets,
    ats_exact,
    ats_monte_carlo,
    ats_taylor_high_p,
    ats_taylor_low_p,
)
from .channel import ChannelTrace, receive, simulate_ats, transmit
from .encoder import (
    EmbeddingProvider,
    EmptyTextPolicy,
    RemoteProvider,
    RemoteUnavailable,
    SyntheticProvider,
    cosine,
    embed,
    reset_steps,
    step_count,
)
from .optimize import (
    OptimizerConfig,
    OptimizerReport,
    evaluate_report,
    full_search,
    ga,
    ga_crossover,
    ga_mutate,
    gbeam,
    random_pa,
    run_strategy,
    sempa_look,
)
from .surrogate import OverlappingLookahead, SurrogateKind, psi_average, rss, tss
from .tokens import (
    NonDivisibleLength,
    OutOfDictionary,
    Packet,
    PacketGroup,
    TokenMessage,
    TooLarge,
    UnevenAssignment,
    WirePacket,
    decode_wire,
    encode_wire,
    enumerate_partitions,
    make_partition,
    partition_count,
    reconstruct,
    validate_partition,
)

__version__ = "0.1.0"
