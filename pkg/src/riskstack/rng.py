"""Seeded randomness with a pinned bit stream.

Fold assignment shuffles run on xoshiro256** (seeded through splitmix64),
so the dealt folds depend only on the seed, never on the numpy version in
the environment. Heavier sampling (synthetic cohorts, bootstrap draws,
per-tree randomness) goes through numpy Generators whose seeds are derived
from a single master seed via SeedSequence spawn keys.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int):
    """Yield an endless splitmix64 stream starting from ``x``."""
    while True:
        x = (x + 0x9E3779B97F4A7C15) & _MASK64
        z = x
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        yield z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Xoshiro256StarStar:
    """xoshiro256** 1.0 (Blackman & Vigna), state seeded via splitmix64."""

    def __init__(self, seed: int):
        stream = _splitmix64(seed & _MASK64)
        self._s = [next(stream) for _ in range(4)]
        if not any(self._s):  # all-zero state is the one forbidden state
            self._s[0] = 1

    def next_u64(self) -> int:
        s = self._s
        result = (_rotl((s[1] * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s[1] << 17) & _MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def randbelow(self, n: int) -> int:
        """Unbiased integer in [0, n) by rejection sampling."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = _MASK64 - (_MASK64 + 1) % n
        while True:
            u = self.next_u64()
            if u <= limit:
                return u % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]


def spawned_rng(master_seed: int, *key: int) -> np.random.Generator:
    """Generator whose stream is pinned by (master_seed, key path)."""
    ss = np.random.SeedSequence(master_seed, spawn_key=tuple(key))
    return np.random.Generator(np.random.PCG64(ss))
