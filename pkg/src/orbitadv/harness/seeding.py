"""Deterministic per-trial random streams.

Stream ``(seed, i)`` is a Philox (counter-based) generator keyed by
``SeedSequence(seed, spawn_key=(i,))``. Distinct ``(seed, i)`` pairs give
distinct keys, and the construction depends only on NumPy's documented
SeedSequence and Philox algorithms, so it is stable across releases of this
package.
"""
from __future__ import annotations

import numpy as np

SEED_MAX = 2**64 - 1

# trial indices at or above this are reserved for auxiliary streams
# (input generation, search randomness) so they never collide with trials
AUX_BASE = 2**40


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= SEED_MAX:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def derive_stream(master_seed: int, trial_index: int, *sub: int) -> np.random.Generator:
    """Generator for trial ``trial_index``; ``sub`` keys split it further."""
    key = (int(trial_index),) + tuple(int(k) for k in sub)
    ss = np.random.SeedSequence(check_seed(master_seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


def aux_stream(master_seed: int, purpose: int) -> np.random.Generator:
    return derive_stream(master_seed, AUX_BASE + purpose)
