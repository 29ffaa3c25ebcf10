"""Splittable SplitMix64 generator.

Every random draw in the package goes through this generator so that index
sequences (shuffles, noise flips, batch draws) are bit-exact across runs and
reproducible from any language that implements SplitMix64.

Algorithm (all arithmetic modulo 2**64)::

    state += 0x9E3779B97F4A7C15
    z = state
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    return z ^ (z >> 31)

Derived streams: ``SplitMix64(seed).child(name)`` seeds a new generator with
``mix64(seed ^ fnv1a64(name))`` where ``mix64`` is the output function above
applied to a single value. The derivation path used by the experiment runner
is ``run seed -> "data" -> "noise"`` for label flips, ``run seed -> "init"``
for weights and ``run seed -> "sampler"`` for batch draws.

Floats use the top 53 bits: ``(x >> 11) * 2**-53``. Bounded integers use
rejection sampling on the full 64-bit range. Gaussians use Box-Muller with
two fresh uniforms per draw (the second output is discarded).
"""

from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * 0x100000001B3) & MASK64
    return h


class SplitMix64:
    def __init__(self, seed: int):
        self.seed = int(seed) & MASK64
        self.state = self.seed

    def child(self, name: str) -> "SplitMix64":
        """Independent stream derived from this generator's seed (not its state)."""
        return SplitMix64(mix64(self.seed ^ fnv1a64(name)))

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        return mix64(self.state)

    def random(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, low: float, high: float, size: int) -> np.ndarray:
        return np.array([low + (high - low) * self.random() for _ in range(size)], dtype=np.float64)

    def randbelow(self, n: int) -> int:
        if n <= 0:
            raise ValueError(f"randbelow needs n >= 1, got {n}")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def normal(self, size: int) -> np.ndarray:
        out = np.empty(size, dtype=np.float64)
        for i in range(size):
            u1 = self.random()
            u2 = self.random()
            # 1 - u1 lies in (0, 1], so the log is finite
            out[i] = math.sqrt(-2.0 * math.log(1.0 - u1)) * math.cos(2.0 * math.pi * u2)
        return out

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of range(n), swapping from the end."""
        idx = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.randbelow(i + 1)
            idx[i], idx[j] = idx[j], idx[i]
        return np.array(idx, dtype=np.int64)

    def sample(self, n: int, k: int) -> np.ndarray:
        """k distinct indices from range(n), via a partial forward Fisher-Yates."""
        if not 0 <= k <= n:
            raise ValueError(f"cannot sample {k} of {n} without replacement")
        idx = list(range(n))
        for i in range(k):
            j = i + self.randbelow(n - i)
            idx[i], idx[j] = idx[j], idx[i]
        return np.array(idx[:k], dtype=np.int64)
