"""Deterministic random-stream derivation.

Every stochastic routine in the package derives its generators from an
integer master seed through ``substream``.  Replication r of a given stage
always receives the same stream no matter how work is scheduled, so serial
and parallel runs produce bit-identical results.
"""

from __future__ import annotations

import numpy as np

# Stage identifiers used as the first element of a spawn key.  Values are
# frozen; changing them changes every downstream random number.
STAGE_EXOG = 0
STAGE_OUTPUT = 1
STAGE_CALIBRATION = 2
STAGE_THRESHOLD = 3
STAGE_DATA_REP = 4
STAGE_PIPELINE = 5


def substream(seed: int, *key: int) -> np.random.Generator:
    """Return the generator for a fixed (seed, key) address.

    The key is a tuple of non-negative integers, typically
    ``(stage, replication_index)``.
    """
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def derive_seed(seed: int, *key: int) -> int:
    """Derive a child integer seed for APIs that take plain seeds."""
    return int(np.random.SeedSequence(seed, spawn_key=key).generate_state(1, np.uint64)[0])


def as_generator(seed) -> np.random.Generator:
    """Accept an int seed or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
