"""Deterministic counter-based random stream.

Every stochastic choice in this package (toy network weights, synthetic
images, training shuffles) is drawn from this generator so that results are
reproducible from a single integer seed, independent of library versions or
platform RNG state. The stream is counter-based: draw ``i`` of stream
``(seed, stream_id)`` is a pure function of ``(seed, stream_id, i)``.

Construction (all arithmetic mod 2**64):

    state_0 = splitmix64(seed * 0x9E3779B97F4A7C15 ^ stream_id)
    raw_i   = splitmix64(state_0 + i * 0xBF58476D1CE4E5B9)

``splitmix64`` is the finalizer from the SplitMix64 generator:

    z = (x + 0x9E3779B97F4A7C15)
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    z ^ (z >> 31)

Uniforms map the top 53 bits of ``raw_i`` to [0, 1); normals come from the
Box-Muller transform of two consecutive uniforms; permutations use
Fisher-Yates driven by ``randint``.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def splitmix64(x: int) -> int:
    """Scramble a 64-bit integer (SplitMix64 finalizer)."""
    z = (x + _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def _splitmix64_array(x: np.ndarray) -> np.ndarray:
    # Vectorized counterpart of splitmix64 on uint64 arrays.
    with np.errstate(over="ignore"):
        z = x + np.uint64(_GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        return z ^ (z >> np.uint64(31))


class StreamRng:
    """Counter-based deterministic random stream.

    Instances are cheap; derive one per purpose (weights, shuffle epoch,
    image index) instead of sharing, so that consumers never perturb each
    other's draws.
    """

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        self._base = splitmix64((self.seed * _GOLDEN ^ self.stream) & _MASK)
        self._counter = 0

    def derive(self, stream: int) -> "StreamRng":
        """Independent child stream with the same seed."""
        return StreamRng(self.seed, splitmix64((self.stream * _MIX2 ^ stream) & _MASK))

    def _raw(self, n: int) -> np.ndarray:
        idx = np.arange(self._counter, self._counter + n, dtype=np.uint64)
        self._counter += n
        with np.errstate(over="ignore"):
            x = np.uint64(self._base) + idx * np.uint64(_MIX1)
        return _splitmix64_array(x)

    def uniform(self, n: int | tuple[int, ...] = 1, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        shape = (n,) if isinstance(n, int) else tuple(n)
        count = int(np.prod(shape)) if shape else 1
        u = (self._raw(count) >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
        return (low + (high - low) * u).reshape(shape)

    def normal(self, n: int | tuple[int, ...] = 1, mean: float = 0.0, std: float = 1.0) -> np.ndarray:
        shape = (n,) if isinstance(n, int) else tuple(n)
        count = int(np.prod(shape)) if shape else 1
        pairs = (count + 1) // 2
        u = self.uniform(2 * pairs).reshape(2, pairs)
        # Box-Muller; u1 shifted away from 0 so log() stays finite.
        u1 = np.maximum(u[0], 1.0 / (1 << 53))
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u[1]
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:count]
        return (mean + std * z).reshape(shape)

    def randint(self, upper: int) -> int:
        """Integer in [0, upper) via 53-bit uniform scaling."""
        u = float(self.uniform(1)[0])
        return min(int(u * upper), upper - 1)

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of range(n)."""
        perm = np.arange(n)
        for i in range(n - 1, 0, -1):
            j = self.randint(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return perm
