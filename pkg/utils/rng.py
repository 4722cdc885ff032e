"""SplitMix64 pseudo-random stream shared by every seeded stage"""

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MUL1 = np.uint64(0xBF58476D1CE4E5B9)
_MUL2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _MUL1
        z = (z ^ (z >> np.uint64(27))) * _MUL2
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    """Counter-based SplitMix64.

    Output k of the stream is mix(seed + k * GAMMA), so a block of draws is
    computed in one vectorized step and still matches the sequential stream.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK
        self._counter = 0

    def next_u64(self, size: int) -> np.ndarray:
        steps = np.arange(self._counter + 1, self._counter + 1 + size, dtype=np.uint64)
        self._counter += size
        with np.errstate(over="ignore"):
            state = np.uint64(self.seed) + steps * _GAMMA
        return _mix(state)

    def random(self, size: int) -> np.ndarray:
        """Uniform floats in [0, 1) with 53 bits of precision"""
        return (self.next_u64(size) >> np.uint64(11)).astype(np.float64) * (2.0**-53)

    def uniform(self, low: float, high: float, size: int) -> np.ndarray:
        return low + (high - low) * self.random(size)

    def integers(self, high: int, size: int) -> np.ndarray:
        """Uniform integers in [0, high)"""
        if high <= 0:
            raise ValueError("high must be positive")
        draws = np.floor(self.random(size) * high).astype(np.int64)
        return np.minimum(draws, high - 1)

    def normal(self, size: int) -> np.ndarray:
        # Box-Muller; 1 - u keeps the log argument in (0, 1]
        u1 = 1.0 - self.random(size)
        u2 = self.random(size)
        return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)

    def permutation(self, n: int) -> np.ndarray:
        # Sorting random keys; ties are practically impossible at 53 bits
        return np.argsort(self.random(n), kind="stable")

    def choice(self, n: int, size: int, replace: bool = True) -> np.ndarray:
        if replace:
            return self.integers(n, size)
        if size > n:
            raise ValueError("cannot draw more items than the population")
        return self.permutation(n)[:size]

    def spawn(self, stream: int) -> "SplitMix64":
        """Independent child stream for a named sub-stage"""
        child_seed = int(_mix(np.array([self.seed ^ (int(stream) & _MASK)], dtype=np.uint64))[0])
        return SplitMix64(child_seed)
