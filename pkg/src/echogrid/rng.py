"""Portable integer-only randomness for world generation and goal sampling.

All procedural decisions in this package flow through SplitMix64 streams.
SplitMix64 is a published 64-bit generator with a one-line state update, so
identical seeds produce identical worlds on every platform and Python
version. Each generation stage (doors, objects, agent, goals, ...) draws
from its own stream, derived by hashing the stage name into the base seed:
adding a new stage never perturbs the draws of existing stages.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1

_GAMMA = 0x9E3779B97F4A7C15
_FNV_BASIS = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def _fnv1a64(text: str) -> int:
    h = _FNV_BASIS
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & MASK64
    return h


class SplitMix64:
    """SplitMix64 stream: integer-only, no floats anywhere."""

    def __init__(self, seed: int):
        self._state = seed & MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def randbelow(self, n: int) -> int:
        """Uniform integer in [0, n) via rejection sampling (no modulo bias)."""
        if n <= 0:
            raise ValueError("randbelow requires n >= 1")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            r = self.next_u64()
            if r < limit:
                return r % n

    def choice(self, seq):
        return seq[self.randbelow(len(seq))]

    def sample(self, seq, k: int) -> list:
        """k distinct elements, order determined by a partial Fisher-Yates."""
        if k > len(seq):
            raise ValueError("sample larger than population")
        pool = list(seq)
        out = []
        for i in range(k):
            j = i + self.randbelow(len(pool) - i)
            pool[i], pool[j] = pool[j], pool[i]
            out.append(pool[i])
        return out


def stage_stream(seed: int, stage: str) -> SplitMix64:
    """Independent stream for one named generation stage."""
    return SplitMix64((seed & MASK64) ^ _fnv1a64(stage))
