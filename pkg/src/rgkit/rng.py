"""Deterministic, self-contained random number generation.

Every random artifact in this package (synthetic scenes, layer weights) is
drawn from the splitmix64 generator defined here, so identical seeds give
bit-identical results on any platform and in any reimplementation of the
same scheme.  The full algorithm, exactly as implemented:

State and output
    The generator state ``s`` is a 64-bit unsigned integer.  Each draw
    advances the state by the golden-gamma increment and mixes it::

        GAMMA = 0x9E3779B97F4A7C15
        s     = (s + GAMMA) mod 2^64
        z     = s
        z     = ((z XOR (z >> 30)) * 0xBF58476D1CE4E5B9) mod 2^64
        z     = ((z XOR (z >> 27)) * 0x94D049BB133111EB) mod 2^64
        out   = z XOR (z >> 31)

    Because draw ``k`` depends only on ``s0 + k*GAMMA``, batches can be
    produced vectorized with no change in the sequence.

Derived quantities
    * uniform f64 in [0, 1):  ``(out >> 11) * 2^-53``
    * standard normal: each normal consumes exactly two u64 draws
      ``u1, u2`` (in that order) and is computed by Box-Muller as
      ``sqrt(-2 * log1p(-u1)) * cos(2 * pi * u2)`` with the uniforms mapped
      as above (``log1p`` is the IEEE one-plus logarithm).  No second-value
      caching: the sine branch is discarded.
    * integer in [0, n): ``floor(uniform * n)`` clamped to ``n - 1``.

Stream seeding
    A named stream is seeded as ``mix64(seed XOR fnv1a64(name))`` where
    ``mix64`` is the output mixer above applied once (without the GAMMA
    increment) and ``fnv1a64`` is FNV-1a over the UTF-8 bytes of the name.
    Distinct names give independent streams for one user seed.
"""

from __future__ import annotations

import numpy as np

_M64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3

_INV_2_53 = 2.0 ** -53


def mix64(x: int) -> int:
    """splitmix64 output mixer applied to a raw 64-bit value."""
    z = x & _M64
    z = ((z ^ (z >> 30)) * _MIX1) & _M64
    z = ((z ^ (z >> 27)) * _MIX2) & _M64
    return z ^ (z >> 31)


def fnv1a64(name: str) -> int:
    """FNV-1a 64-bit hash of a stream name (UTF-8 bytes)."""
    h = _FNV_OFFSET
    for b in name.encode("utf-8"):
        h = ((h ^ b) * _FNV_PRIME) & _M64
    return h


def stream_seed(seed: int, name: str) -> int:
    """Initial state for the named stream under the given user seed."""
    return mix64((seed & _M64) ^ fnv1a64(name))


def unit_floats(u: np.ndarray) -> np.ndarray:
    """Map raw u64 draws to uniform float64 in [0, 1) (top 53 bits)."""
    return (u >> np.uint64(11)).astype(np.float64) * _INV_2_53


def boxmuller(u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
    """Cosine-branch Box-Muller on unit uniforms, elementwise."""
    return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)


class SplitMix64:
    """splitmix64 generator with vectorized batch draws.

    ``SplitMix64(state)`` starts from a raw 64-bit state; use
    :func:`stream_seed` to derive the state for a (seed, name) pair.
    """

    def __init__(self, state: int):
        self._state = state & _M64

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _M64
        return mix64(self._state)

    def u64(self, n: int) -> np.ndarray:
        """Next ``n`` raw draws as a uint64 array (same sequence as scalar)."""
        if n < 0:
            raise ValueError("n must be >= 0")
        start = np.uint64(self._state)
        ks = np.arange(1, n + 1, dtype=np.uint64)
        # uint64 array arithmetic wraps mod 2^64, matching the scalar path
        z = start + ks * np.uint64(_GAMMA)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        z = z ^ (z >> np.uint64(31))
        self._state = (self._state + n * _GAMMA) & _M64
        return z

    def next_f64(self) -> float:
        return (self.next_u64() >> 11) * _INV_2_53

    def uniforms(self, n: int) -> np.ndarray:
        """``n`` uniform float64 values in [0, 1)."""
        return unit_floats(self.u64(n))

    def normals(self, n: int) -> np.ndarray:
        """``n`` standard normals; the i-th uses raw draws 2i and 2i+1."""
        u = self.uniforms(2 * n)
        return boxmuller(u[0::2], u[1::2])

    def below(self, n: int) -> int:
        """Integer in [0, n) via the documented floor(uniform * n) rule."""
        if n <= 0:
            raise ValueError("n must be positive")
        k = int(self.next_f64() * n)
        return min(k, n - 1)
