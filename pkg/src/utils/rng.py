"""
Counter-based pseudo-random streams.

Every pseudo-random draw in the toolkit comes from numpy's Philox generator,
keyed by the run seed and a stream number. The stream number packs a purpose
tag with the time step (or MCMC iteration), so any single step can be
regenerated without replaying the ones before it.
"""
import numpy as np

MASK64 = (1 << 64) - 1

# Purpose tags (top 16 bits of the stream word)
SMC_STEP = 1
POINTS = 2
PROPOSAL = 3
SIMULATION = 4
PARAMS = 5
DISCREPANCY = 6
SMOOTHING = 7
FILTER_SEED = 8


def stream(seed: int, counter: int = 0, purpose: int = 0) -> np.random.Generator:
    """Generator for the (seed, purpose, counter) stream."""
    word = ((purpose & 0xFFFF) << 48) | (counter & ((1 << 48) - 1))
    key = np.array([seed & MASK64, word], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def as_generator(seed_or_rng) -> np.random.Generator:
    """Accepts a seed or a ready Generator."""
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return stream(int(seed_or_rng))


def mix64(value: int) -> int:
    """splitmix64 finalizer on a Python int."""
    z = value & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, *parts: int) -> int:
    """Deterministic child seed of (seed, parts...)."""
    z = mix64(seed)
    for part in parts:
        z = mix64(z ^ mix64(part + 0x9E3779B97F4A7C15))
    return z
