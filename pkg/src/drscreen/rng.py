"""Seedable PRNG with a documented layout so stochastic image operators are
bit-reproducible across builds.

The generator is SplitMix64: state advances by the golden-gamma constant and
each output is a 64-bit mix of the new state.  Uniform doubles take the top
53 bits; normals come from the polar-free Box-Muller transform over
consecutive uniform pairs.  Anything that must be replayable from a stored
seed (noise injection, augmentation parameter draws) goes through this class
rather than numpy's global state.
"""

from __future__ import annotations

import math

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


class SplitMix64:
    """Deterministic 64-bit generator, one instance per seeded operation."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform_in(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.uniform()

    def normal_pair(self) -> tuple[float, float]:
        """Box-Muller: two independent N(0,1) draws from two uniforms.

        u1 is nudged away from zero so log(u1) is finite.
        """
        u1 = self.uniform()
        u2 = self.uniform()
        if u1 <= 0.0:
            u1 = 2.0 ** -53
        r = math.sqrt(-2.0 * math.log(u1))
        theta = 2.0 * math.pi * u2
        return r * math.cos(theta), r * math.sin(theta)

    def normals(self, n: int) -> list[float]:
        out: list[float] = []
        while len(out) < n:
            a, b = self.normal_pair()
            out.append(a)
            if len(out) < n:
                out.append(b)
        return out
