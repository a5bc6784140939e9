"""Deterministic, forkable randomness.

Every stochastic step in the package draws from an RngStream. Streams are
counter-based (Philox), so a given seed reproduces the same draw sequence
bit-exactly on any platform, and named sub-streams let parallel consumers
(corpus samples, training stages) stay independent of each other and of
iteration order.
"""

from __future__ import annotations

import hashlib

import numpy as np


class RngStream:
    """A seeded random stream with fork-by-key sub-streams.

    Sub-streams derive their seed by hashing (parent seed, key), so
    `seeded_rng(0).substream("corpus")` is the same stream no matter what
    was drawn from the parent before the fork.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._gen = np.random.Generator(np.random.Philox(key=self.seed))

    def substream(self, key: str) -> "RngStream":
        digest = hashlib.sha256(f"{self.seed}:{key}".encode()).digest()
        return RngStream(int.from_bytes(digest[:8], "little"))

    def normal(self, shape=(), dtype=np.float32) -> np.ndarray:
        return self._gen.standard_normal(size=shape, dtype=np.float64).astype(dtype)

    def uniform(self, lo: float = 0.0, hi: float = 1.0, shape=(), dtype=np.float32) -> np.ndarray:
        return self._gen.uniform(lo, hi, size=shape).astype(dtype)

    def integers(self, lo: int, hi: int, shape=()) -> np.ndarray:
        return self._gen.integers(lo, hi, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed})"


def seeded_rng(seed: int) -> RngStream:
    """Create the root stream for a run; all other streams fork from it."""
    return RngStream(seed)
