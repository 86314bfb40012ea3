"""Reproducible random streams.

All randomness flows through numpy Generators backed by Philox, a counter-based
64-bit bit generator. Independent streams (per replicate, per noise component,
per multistart draw) are derived by SeedSequence spawning, so results are
bit-reproducible from a single master seed and independent of execution order.
"""

from __future__ import annotations

import numpy as np


def stream(seed) -> np.random.Generator:
    """Master stream for a 64-bit seed (or an existing SeedSequence)."""
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.Philox(seed))


def split(parent, n: int) -> list:
    """n child streams derived from a parent seed/stream by key-splitting."""
    if isinstance(parent, np.random.Generator):
        return list(parent.spawn(n))
    if not isinstance(parent, np.random.SeedSequence):
        parent = np.random.SeedSequence(int(parent))
    return [np.random.Generator(np.random.Philox(child)) for child in parent.spawn(n)]
