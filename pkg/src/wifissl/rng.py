"""Portable pseudo-random streams.

All randomness in the package (shuffles, weight init, dropout masks, noise
injection) is drawn from one algorithm so that results can be reproduced
outside numpy:

* seeding: the integer seed is fed through splitmix64 to fill the four
  64-bit words of a xoshiro256** state;
* doubles: ``(next() >> 11) * 2**-53``, uniform on [0, 1);
* Gaussians: Box-Muller on pairs ``u1 = 1 - double()``, ``u2 = double()``,
  emitting ``r*cos(2*pi*u2)`` then ``r*sin(2*pi*u2)``. An odd request
  discards the final sine value; there is no cached spare between calls.
* permutations: Fisher-Yates from the top index down with
  ``j = floor(double() * (i + 1))``.
"""

from __future__ import annotations

import zlib

import numba
import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U5 = np.uint64(5)
_U7 = np.uint64(7)
_U9 = np.uint64(9)
_U11 = np.uint64(11)
_U17 = np.uint64(17)
_U27 = np.uint64(27)
_U30 = np.uint64(30)
_U31 = np.uint64(31)
_U45 = np.uint64(45)
_U64 = np.uint64(64)
_TWO_M53 = 1.0 / 9007199254740992.0


@numba.njit(cache=True)
def _rotl(x, k):
    return (x << k) | (x >> (_U64 - k))


@numba.njit(cache=True)
def _splitmix_fill(seed, out):
    x = seed
    for i in range(out.shape[0]):
        x = x + _GOLDEN
        z = x
        z = (z ^ (z >> _U30)) * _MIX1
        z = (z ^ (z >> _U27)) * _MIX2
        out[i] = z ^ (z >> _U31)


@numba.njit(cache=True)
def _next(s):
    result = _rotl(s[1] * _U5, _U7) * _U9
    t = s[1] << _U17
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], _U45)
    return result


@numba.njit(cache=True)
def _fill_u64(s, out):
    for i in range(out.shape[0]):
        out[i] = _next(s)


@numba.njit(cache=True)
def _fill_double(s, out):
    for i in range(out.shape[0]):
        out[i] = np.float64(_next(s) >> _U11) * _TWO_M53


@numba.njit(cache=True)
def _fill_normal(s, out):
    n = out.shape[0]
    i = 0
    while i < n:
        u1 = 1.0 - np.float64(_next(s) >> _U11) * _TWO_M53
        u2 = np.float64(_next(s) >> _U11) * _TWO_M53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        out[i] = r * np.cos(theta)
        if i + 1 < n:
            out[i + 1] = r * np.sin(theta)
        i += 2


@numba.njit(cache=True)
def _shuffle(s, idx):
    for i in range(idx.shape[0] - 1, 0, -1):
        u = np.float64(_next(s) >> _U11) * _TWO_M53
        j = np.int64(u * (i + 1))
        tmp = idx[i]
        idx[i] = idx[j]
        idx[j] = tmp


def splitmix64(seed: int, n: int) -> np.ndarray:
    """First ``n`` outputs of splitmix64 started from ``seed``."""
    out = np.empty(n, dtype=np.uint64)
    _splitmix_fill(np.uint64(seed & 0xFFFFFFFFFFFFFFFF), out)
    return out


def derive_seed(seed: int, tag: str) -> int:
    """Independent 64-bit seed for a named purpose (init, noise, ...)."""
    mixed = (int(seed) ^ (zlib.crc32(tag.encode()) << 32)) & 0xFFFFFFFFFFFFFFFF
    return int(splitmix64(mixed, 1)[0])


class Rng:
    """xoshiro256** stream. Mutable; not shared between threads."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.state = splitmix64(self.seed, 4)

    def next_u64(self, n: int) -> np.ndarray:
        out = np.empty(n, dtype=np.uint64)
        _fill_u64(self.state, out)
        return out

    def random(self, n: int) -> np.ndarray:
        out = np.empty(n, dtype=np.float64)
        _fill_double(self.state, out)
        return out

    def uniform(self, low: float, high: float, n: int) -> np.ndarray:
        return low + (high - low) * self.random(n)

    def normal(self, n: int, mu: float = 0.0, sigma: float = 1.0) -> np.ndarray:
        out = np.empty(n, dtype=np.float64)
        _fill_normal(self.state, out)
        return mu + sigma * out

    def permutation(self, n: int) -> np.ndarray:
        idx = np.arange(n, dtype=np.int64)
        _shuffle(self.state, idx)
        return idx

    def spawn(self) -> "Rng":
        """Child stream seeded from this one; advances this stream by one word."""
        return Rng(int(self.next_u64(1)[0]))
