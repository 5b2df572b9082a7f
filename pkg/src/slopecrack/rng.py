"""Seed-derived random streams."""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1


class SplitMix64:
    """The splitmix64 generator: a 64-bit counter passed through a bijective mixer."""

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        """Uniform integer in [0, n) by rejection (no modulo bias)."""
        limit = MASK64 + 1 - ((MASK64 + 1) % n)
        while True:
            v = self.next()
            if v < limit:
                return v % n


def fisher_yates(n: int, stream: SplitMix64) -> list[int]:
    """A permutation of range(n) drawn from ``stream``."""
    perm = list(range(n))
    for i in range(n - 1, 0, -1):
        j = stream.below(i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def derived_rng(*keys: int) -> np.random.Generator:
    """Independent numpy generator keyed by a tuple of non-negative integers."""
    return np.random.default_rng(np.random.SeedSequence([int(k) & MASK64 for k in keys]))
