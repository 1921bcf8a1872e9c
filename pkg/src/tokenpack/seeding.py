"""Deterministic seed derivation shared by simulators, optimizers and the sweep harness."""

from __future__ import annotations

import numpy as np

RngLike = int | np.random.Generator | np.random.SeedSequence


def spawn_seed(*parts: int) -> int:
    """Fold an ordered tuple of integers into a single 64-bit seed.

    Used to give sub-tasks (trials, levels, cells) independent streams that
    are reproducible from a master seed.
    """
    ss = np.random.SeedSequence([int(p) & 0xFFFFFFFFFFFFFFFF for p in parts])
    return int(ss.generate_state(1, np.uint64)[0])


def as_generator(seed: RngLike) -> np.random.Generator:
    """Accept an int seed, a SeedSequence, or an existing Generator (passed through)."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
