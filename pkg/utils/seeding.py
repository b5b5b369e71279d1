"""Splittable seed derivation for reproducible Monte Carlo runs."""
from enum import IntEnum

import numpy as np


class Stage(IntEnum):
    """Stage keys mixed into derived seeds."""

    CLOUD = 0
    SOLVER = 1
    LABELS = 2
    MCMC = 3
    FIELD = 4
    POSTERIOR_DRAWS = 5
    CHAIN = 6


def derive_seed(master: int, *keys: int) -> int:
    """Derive an independent 64-bit seed from a master seed and integer keys.

    The same (master, keys) always yields the same seed; distinct key tuples
    yield statistically independent streams.
    """
    seq = np.random.SeedSequence(entropy=int(master), spawn_key=tuple(int(k) for k in keys))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def make_rng(seed: int) -> np.random.Generator:
    """Return a PCG64 generator for the given seed."""
    return np.random.default_rng(np.random.SeedSequence(int(seed)))
