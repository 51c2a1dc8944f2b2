"""Seeded random streams.

Every stochastic routine takes an explicit 64-bit seed and builds its own
Philox (counter-based) generator, so results never depend on call order.
"""
import numpy as np

SEED_MASK = (1 << 64) - 1


def make_rng(seed):
    """Return a Philox-backed ``numpy.random.Generator`` for ``seed``."""
    seed = int(seed) & SEED_MASK
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def split_seed(seed, count):
    """Derive ``count`` independent child seeds from ``seed``."""
    children = np.random.SeedSequence(int(seed) & SEED_MASK).spawn(int(count))
    return [int(c.generate_state(1, np.uint64)[0]) for c in children]


def child_seed(seed, *path):
    """Deterministic child seed addressed by a tuple of integers."""
    ss = np.random.SeedSequence(int(seed) & SEED_MASK, spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, np.uint64)[0])
