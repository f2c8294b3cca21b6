"""Deterministic SplitMix64 generator.

Every random choice in the pipeline (scene rendering, event placement,
parameter initialisation, batch sampling, dropout masks) draws from this
generator so datasets and checkpoints are reproducible bit for bit.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    """SplitMix64 output function applied to a 64-bit integer."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, *keys: int) -> int:
    """Derive an independent sub-seed from a parent seed and integer keys.

    derive_seed(seed, video_index, event_index) gives each video and event
    its own stream regardless of the order they are generated in.
    """
    h = mix64(seed & MASK64)
    for key in keys:
        h = mix64((h + GAMMA * ((key & MASK64) + 1)) & MASK64)
    return h


class SplitMix64:
    """SplitMix64 pseudo-random generator with numpy bulk draws."""

    def __init__(self, seed: int = 0):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GAMMA) & MASK64
        return mix64(self.state)

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.random()

    def randint(self, low: int, high: int) -> int:
        """Uniform integer in the closed range [low, high]."""
        if high < low:
            raise ValueError(f"Empty range [{low}, {high}]")
        return low + int(self.random() * (high - low + 1))

    def choice(self, items: list):
        return items[self.randint(0, len(items) - 1)]

    def permutation(self, n: int) -> list[int]:
        """Fisher-Yates shuffle of range(n)."""
        order = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.randint(0, i)
            order[i], order[j] = order[j], order[i]
        return order

    def u64_array(self, n: int) -> np.ndarray:
        """Next n outputs as a uint64 array; advances the state by n steps."""
        steps = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + steps * np.uint64(GAMMA)
            z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
            z = z ^ (z >> np.uint64(31))
        self.state = (self.state + n * GAMMA) & MASK64
        return z

    def random_array(self, shape) -> np.ndarray:
        """Uniform float64 array in [0, 1)."""
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape, dtype=np.int64))
        bits = self.u64_array(n) >> np.uint64(11)
        return (bits.astype(np.float64) * (1.0 / (1 << 53))).reshape(shape)

    def uniform_array(self, low: float, high: float, shape) -> np.ndarray:
        return low + (high - low) * self.random_array(shape)
