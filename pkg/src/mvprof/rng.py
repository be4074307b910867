"""splitmix64 generator with Box-Muller normals.

The k-th output (k = 1, 2, ...) of a generator seeded with ``s`` is
``mix(s + k * GAMMA mod 2**64)``, so blocks of draws are computed in one vectorised
numpy pass while staying bit-identical to the scalar recurrence.

Uniforms use the top 53 bits: ``(z >> 11) * 2**-53`` in ``[0, 1)``. Normals consume
uniforms in pairs ``(u1, u2)`` and emit ``r*cos(t)`` then ``r*sin(t)`` with
``r = sqrt(-2 ln(1 - u1))`` and ``t = 2*pi*u2``.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return z ^ (z >> 31)


def _mix_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX2)
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    def __init__(self, seed: int):
        self.seed = int(seed) & MASK64
        self.state = self.seed

    def next_u64(self) -> int:
        self.state = (self.state + GAMMA) & MASK64
        return mix64(self.state)

    def u64_array(self, n: int) -> np.ndarray:
        if n <= 0:
            return np.zeros(0, dtype=np.uint64)
        k = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + k * np.uint64(GAMMA)
            out = _mix_array(z)
        self.state = (self.state + n * GAMMA) & MASK64
        return out

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * 2.0**-53

    def uniforms(self, n: int) -> np.ndarray:
        return (self.u64_array(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def normals(self, shape, std: float = 1.0) -> np.ndarray:
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape, dtype=np.int64))
        u = self.uniforms(2 * ((n + 1) // 2))
        r = np.sqrt(-2.0 * np.log1p(-u[0::2]))
        t = 2.0 * np.pi * u[1::2]
        z = np.empty(u.shape[0])
        z[0::2] = r * np.cos(t)
        z[1::2] = r * np.sin(t)
        return z[:n].reshape(shape) * std

    def randbelow(self, n: int) -> int:
        """Integer in ``[0, n)`` as ``floor(uniform * n)``."""
        return min(int(self.uniform() * n), n - 1)

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of ``range(n)`` driven by :meth:`randbelow`."""
        out = np.arange(n)
        for i in range(n - 1, 0, -1):
            j = self.randbelow(i + 1)
            out[i], out[j] = out[j], out[i]
        return out

    def child(self, key: int) -> "SplitMix64":
        """Independent stream derived from this generator's seed and ``key``."""
        return SplitMix64(mix64(self.seed ^ mix64((key + 1) * GAMMA)))
