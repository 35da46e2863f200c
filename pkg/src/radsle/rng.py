"""Counter-based random numbers: Philox4x32-10 keyed by (seed, sample_index).

Every random draw is a pure function of ``(seed, sample_index, block, lane)``,
so Monte Carlo results do not depend on how samples are split across
workers.  Gaussians use the Box-Muller transform on two 53-bit uniforms
built from one Philox block: ``z0 = r cos(2 pi u2)``, ``z1 = r sin(2 pi u2)``
with ``r = sqrt(-2 log(1 - u1))``.

Counter layout: ``(idx_lo, idx_hi, block, lane)`` with key
``(seed_lo, seed_hi)``.  Lane 0 carries the driving increments (two per
block); lanes with the top bit set carry Brownian-bridge refinements.
"""
from __future__ import annotations

import math

import numba as nb
import numpy as np

TWO_PI = 2.0 * math.pi
BRIDGE_LANE = 0x80000000
_MASK32 = 0xFFFFFFFF


@nb.njit(cache=True, inline="always")
def _mulhilo(a, m):
    p = np.uint64(a) * np.uint64(m)
    return np.uint32(p >> np.uint64(32)), np.uint32(p & np.uint64(0xFFFFFFFF))


@nb.njit(cache=True)
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Philox4x32 with 10 rounds; all arguments are 32-bit words."""
    c0 = np.uint32(c0)
    c1 = np.uint32(c1)
    c2 = np.uint32(c2)
    c3 = np.uint32(c3)
    k0 = np.uint32(k0)
    k1 = np.uint32(k1)
    for _ in range(10):
        hi0, lo0 = _mulhilo(c0, 0xD2511F53)
        hi1, lo1 = _mulhilo(c2, 0xCD9E8D57)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
        k0 = np.uint32(k0 + np.uint32(0x9E3779B9))
        k1 = np.uint32(k1 + np.uint32(0xBB67AE85))
    return c0, c1, c2, c3


@nb.njit(cache=True, inline="always")
def _u53(a, b):
    return (np.float64(a >> np.uint32(5)) * 67108864.0 + np.float64(b >> np.uint32(6))) * (
        1.0 / 9007199254740992.0
    )


@nb.njit(cache=True)
def uniform_pair(seed, idx, block, lane):
    """Two uniforms in [0, 1) from one Philox block."""
    s = np.uint64(seed)
    i = np.uint64(idx)
    r0, r1, r2, r3 = philox4x32(
        i & np.uint64(0xFFFFFFFF),
        i >> np.uint64(32),
        np.uint64(block) & np.uint64(0xFFFFFFFF),
        np.uint64(lane) & np.uint64(0xFFFFFFFF),
        s & np.uint64(0xFFFFFFFF),
        s >> np.uint64(32),
    )
    return _u53(r0, r1), _u53(r2, r3)


@nb.njit(cache=True)
def normal_pair(seed, idx, block, lane):
    u1, u2 = uniform_pair(seed, idx, block, lane)
    r = math.sqrt(-2.0 * math.log1p(-u1))
    a = TWO_PI * u2
    return r * math.cos(a), r * math.sin(a)


@nb.njit(cache=True)
def driving_normal(seed, idx, step):
    """Standard normal feeding driver step ``step`` of sample ``idx``."""
    z0, z1 = normal_pair(seed, idx, step >> 1, 0)
    return z0 if (step & 1) == 0 else z1


@nb.njit(cache=True)
def bridge_normal(seed, idx, step, node):
    """Standard normal for Brownian-bridge node ``node`` (>= 1) inside a driver step."""
    z0, _ = normal_pair(seed, idx, step, BRIDGE_LANE | node)
    return z0


@nb.njit(cache=True)
def driving_normals(seed, idx, n):
    out = np.empty(n)
    for k in range(n):
        out[k] = driving_normal(seed, idx, k)
    return out


class KeyedStream:
    """Sequential view of the (seed, sample_index) stream.

    Draws advance a block counter on a private lane, so two streams with
    different keys never share a counter value.
    """

    LANE = 0x40000000

    def __init__(self, seed: int, sample_index: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.sample_index = int(sample_index) & 0xFFFFFFFFFFFFFFFF
        self.block = 0

    def uniforms(self, n: int) -> np.ndarray:
        out = np.empty(n)
        for k in range(0, n, 2):
            a, b = uniform_pair(np.uint64(self.seed), np.uint64(self.sample_index), self.block, self.LANE)
            self.block += 1
            out[k] = a
            if k + 1 < n:
                out[k + 1] = b
        return out

    def normals(self, n: int) -> np.ndarray:
        out = np.empty(n)
        for k in range(0, n, 2):
            a, b = normal_pair(np.uint64(self.seed), np.uint64(self.sample_index), self.block, self.LANE)
            self.block += 1
            out[k] = a
            if k + 1 < n:
                out[k + 1] = b
        return out


def rng_stream(seed: int, sample_index: int) -> KeyedStream:
    """Stateless derivation of the per-sample stream."""
    return KeyedStream(seed, sample_index)


def check_seed(seed) -> int:
    seed = int(seed)
    if seed < 0 or seed > 0xFFFFFFFFFFFFFFFF:
        raise ValueError(f"seed must fit in 64 unsigned bits, got {seed}")
    return seed
