"""Counter-based Philox4x32-10 generator.

Every random number is a pure function of (seed, counter), so streams for
different paths or samples never need to be coordinated and results do
not depend on scheduling.
"""
from __future__ import annotations

import numpy as np
from numba import njit, uint64

PHILOX_M0 = 0xD2511F53
PHILOX_M1 = 0xCD9E8D57
PHILOX_W0 = 0x9E3779B9
PHILOX_W1 = 0xBB67AE85
MASK32 = 0xFFFFFFFF
TWO_M53 = 1.0 / 9007199254740992.0


@njit(cache=True, inline="always")
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Ten Philox rounds; all arguments and results are uint64 holding 32 bits."""
    m0 = uint64(PHILOX_M0)
    m1 = uint64(PHILOX_M1)
    mask = uint64(MASK32)
    for r in range(10):
        if r > 0:
            k0 = (k0 + uint64(PHILOX_W0)) & mask
            k1 = (k1 + uint64(PHILOX_W1)) & mask
        p0 = m0 * c0
        p1 = m1 * c2
        hi0 = p0 >> uint64(32)
        lo0 = p0 & mask
        hi1 = p1 >> uint64(32)
        lo1 = p1 & mask
        c0 = hi1 ^ c1 ^ k0
        c1 = lo1
        c2 = hi0 ^ c3 ^ k1
        c3 = lo0
    return c0, c1, c2, c3


@njit(cache=True, inline="always")
def words_to_unit(a, b):
    """Two 32-bit words to a double in (0, 1) with 53 random bits."""
    hi = a >> uint64(5)
    lo = b >> uint64(6)
    return ((hi * uint64(67108864) + lo) + 0.5) * TWO_M53


@njit(cache=True)
def _uniform_block(seed_lo, seed_hi, stream, start, n, out):
    for i in range(n):
        idx = uint64(start + i)
        c0, c1, c2, c3 = philox4x32(idx & uint64(MASK32), idx >> uint64(32), uint64(stream),
                                    uint64(0), seed_lo, seed_hi)
        out[i] = words_to_unit(c0, c1)


def split_seed(seed: int) -> tuple[int, int]:
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    return seed & MASK32, seed >> 32


def uniforms(seed: int, n: int, stream: int = 0, start: int = 0) -> np.ndarray:
    """Uniforms in (0, 1) for sample indices start .. start+n-1 of a stream."""
    lo, hi = split_seed(seed)
    out = np.empty(int(n), dtype=np.float64)
    _uniform_block(np.uint64(lo), np.uint64(hi), int(stream), int(start), int(n), out)
    return out


def philox_words(counter, key) -> tuple[int, int, int, int]:
    """Raw generator output for a 4-word counter and 2-word key."""
    c = [np.uint64(int(v) & MASK32) for v in counter]
    k = [np.uint64(int(v) & MASK32) for v in key]
    return tuple(int(v) for v in philox4x32(c[0], c[1], c[2], c[3], k[0], k[1]))
