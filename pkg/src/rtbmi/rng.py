"""Keyed random streams.

Every stochastic step draws from a generator derived from the run seed plus
a tuple of integer indices (replicate, purpose, method, ...).  Streams are
therefore independent of execution order, so a simulation gives identical
output however its replicates are scheduled across workers.
"""

from __future__ import annotations

import numpy as np

__all__ = ["DATA", "IMPUTE", "BOOTSTRAP", "TRUTH", "stream", "check_random_state"]

# purpose tags used as the second element of a stream key
DATA = 0
IMPUTE = 1
BOOTSTRAP = 2
TRUTH = 3


def stream(seed: int, *key: int) -> np.random.Generator:
    """Return a Philox generator for ``seed`` and the index path ``key``."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def check_random_state(random_state) -> np.random.Generator:
    """Coerce ``None``, an int seed or a Generator into a Generator."""
    if isinstance(random_state, np.random.Generator):
        return random_state
    if random_state is None:
        return np.random.default_rng()
    if isinstance(random_state, (int, np.integer)):
        return stream(int(random_state))
    raise TypeError(f"cannot build a Generator from {random_state!r}")
