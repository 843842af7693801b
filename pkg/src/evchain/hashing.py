"""Deterministic 64-bit hashing primitives and named RNG streams.

Everything downstream that needs randomness or pseudo-random vectors goes
through these functions so that runs are reproducible bit-for-bit across
platforms.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3


def fnv1a64(data: bytes) -> int:
    """FNV-1a 64-bit hash of a byte string."""
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & _MASK64
    return h


def splitmix64(x: int) -> int:
    """One splitmix64 scrambling step (finalizer of the splitmix64 generator)."""
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def unit_interval(x: int) -> float:
    """Map a 64-bit integer to [0, 1)."""
    return x * 2.0**-64


def stream_seed(seed: int, name: str) -> int:
    """Derive a 64-bit sub-seed for a named random stream.

    All randomness in a run flows from one root seed; each consumer asks for
    its own stream by name so that adding a consumer never perturbs others.
    """
    return splitmix64((seed & _MASK64) ^ fnv1a64(name.encode("utf-8")))


def stream_rng(seed: int, name: str) -> np.random.Generator:
    """NumPy generator for the named stream derived from ``seed``."""
    return np.random.default_rng(stream_seed(seed, name))
