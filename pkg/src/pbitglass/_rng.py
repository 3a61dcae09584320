"""Seeded random streams.

Every stochastic routine takes an integer ``seed`` plus integer keys
(run id, replica id, ...). The pair maps to an independent PCG64 stream via
``SeedSequence`` spawn keys, so results are reproducible per key and
streams never overlap.
"""
import numpy as np


def make_rng(seed, *keys):
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        return np.random.default_rng()
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.default_rng(ss)


def derive_seed(seed, *keys):
    """Integer seed for a sub-task, stable across platforms."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint32)[0])
