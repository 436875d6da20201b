"""Reproducible random streams.

Every stream is a Philox (counter-based) generator keyed by a 64-bit master
seed plus a tuple of non-negative integers (replicate block, check id, ...).
Two calls with the same key return bit-identical streams, independent of
thread scheduling.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1


def substream(seed: int, *key: int) -> np.random.Generator:
    """Return the generator for ``(seed, *key)``."""
    if seed < 0 or seed > MASK64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    if any(k < 0 for k in key):
        raise ValueError(f"substream keys must be non-negative, got {key}")
    ss = np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
