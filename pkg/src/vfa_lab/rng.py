"""Deterministic random number generation for reproducible experiments.

A splitmix64 stream expands a single 64-bit seed into the state of a bank
of xoshiro256++ generators. The bank is advanced in lockstep with numpy
uint64 arithmetic so large matrices can be filled quickly while remaining
bit-reproducible: the output for a given (seed, n) is a pure function of
those arguments, independent of platform or call history.
"""

from __future__ import annotations

import numpy as np

_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)

# Number of independent lanes advanced per step. Part of the output
# definition: changing it changes the stream.
LANES = 256


def splitmix64_stream(seed: int, n: int) -> np.ndarray:
    """First n outputs of splitmix64 for the given seed, as uint64."""
    out = np.empty(n, dtype=np.uint64)
    x = seed & 0xFFFFFFFFFFFFFFFF
    for i in range(n):
        x = (x + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
        z = x
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
        out[i] = (z ^ (z >> 31)) & 0xFFFFFFFFFFFFFFFF
    return out


def _rotl(x: np.ndarray, k: int) -> np.ndarray:
    k64 = np.uint64(k)
    inv = np.uint64(64 - k)
    return ((x << k64) | (x >> inv)) & _MASK64


class Xoshiro256pp:
    """Bank of xoshiro256++ generators seeded from one splitmix64 stream."""

    def __init__(self, seed: int, lanes: int = LANES):
        state = splitmix64_stream(seed, 4 * lanes).reshape(4, lanes)
        self._s = [state[i].copy() for i in range(4)]
        self._lanes = lanes

    def next_uint64(self) -> np.ndarray:
        """One uint64 per lane."""
        s0, s1, s2, s3 = self._s
        result = (_rotl((s0 + s3) & _MASK64, 23) + s0) & _MASK64
        t = (s1 << np.uint64(17)) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        self._s[3] = _rotl(s3, 45)
        self._s[0], self._s[1], self._s[2] = s0, s1, s2
        return result

    def uniform(self, n: int) -> np.ndarray:
        """n doubles in [0, 1) with 53-bit resolution, lane-major order."""
        rounds = -(-n // self._lanes)
        blocks = np.empty((rounds, self._lanes), dtype=np.uint64)
        for r in range(rounds):
            blocks[r] = self.next_uint64()
        u = (blocks.reshape(-1)[:n] >> np.uint64(11)).astype(np.float64)
        return u * (1.0 / (1 << 53))

    def gaussian(self, n: int) -> np.ndarray:
        """n standard normals via the Box-Muller transform."""
        half = -(-n // 2)
        u1 = self.uniform(half)
        u2 = self.uniform(half)
        # log(0) guard: remap the (measure-zero) u1 == 0 draw
        u1 = np.where(u1 == 0.0, 2.0 ** -53, u1)
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.empty(2 * half, dtype=np.float64)
        z[0::2] = r * np.cos(theta)
        z[1::2] = r * np.sin(theta)
        return z[:n]
