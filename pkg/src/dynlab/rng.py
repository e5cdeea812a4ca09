"""Deterministic 64-bit PRNG used by every generator and sampler.

xorshift64* (Vigna 2016): shifts (12, 25, 27), output multiplier
0x2545F4914F6CDD1D.  Seeds are first scrambled with one splitmix64 round so
that small or zero seeds still give a well-mixed non-zero state.  All derived
draws are integer-only, which keeps generated traces bit-identical across
platforms and implementations.
"""

from __future__ import annotations

from fractions import Fraction

MASK64 = (1 << 64) - 1
MULTIPLIER = 0x2545F4914F6CDD1D


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


class XorShift64Star:
    def __init__(self, seed: int = 0):
        state = splitmix64(seed & MASK64)
        self.state = state or 0x9E3779B97F4A7C15

    def next_u64(self) -> int:
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & MASK64
        x ^= x >> 27
        self.state = x
        return (x * MULTIPLIER) & MASK64

    def below(self, n: int) -> int:
        """Uniform integer in [0, n) by rejection (no modulo bias)."""
        if n <= 0:
            raise ValueError("n must be positive")
        if n == 1:
            return 0
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            r = self.next_u64()
            if r < limit:
                return r % n

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi]."""
        return lo + self.below(hi - lo + 1)

    def chance(self, p: Fraction) -> bool:
        """True with exact rational probability p."""
        p = Fraction(p)
        if p <= 0:
            return False
        if p >= 1:
            return True
        return self.below(p.denominator) < p.numerator

    def subset(self, population: list) -> list:
        """Each element kept independently with probability 1/2."""
        out = []
        bits = 0
        left = 0
        for x in population:
            if left == 0:
                bits = self.next_u64()
                left = 64
            if bits & 1:
                out.append(x)
            bits >>= 1
            left -= 1
        return out
