"""Deterministic, platform-independent random streams.

Algorithm ("sm64bm1"): the i-th raw word is splitmix64's finalizer applied
to ``seed + (i+1)*GOLDEN`` (64-bit wraparound), i.e. splitmix64 run in
counter mode, so any block of the stream can be generated independently.
Gaussians come from the Box-Muller transform over consecutive word pairs.
Everything downstream of the integer stream runs through the same numpy
code regardless of kernel backend, so identical seeds give bit-identical
floats on every install.
"""

import numpy as np

from . import backend

PRNG_ID = "sm64bm1"
PRNG_CODE = 1

_GOLDEN = 0x9E3779B97F4A7C15
_MASK = 0xFFFFFFFFFFFFFFFF
_TWO_PI = 6.283185307179586
_INV_2_53 = 2.0 ** -53


def mix64(x):
    """splitmix64 finalizer on a Python int, mod 2**64."""
    z = x & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_seed(seed, *keys):
    """Stable sub-stream seed from a master seed and integer keys."""
    s = mix64((seed + _GOLDEN) & _MASK)
    for k in keys:
        s = mix64((s ^ ((int(k) + _GOLDEN) & _MASK)) & _MASK)
    return s


def words(seed, n, start=0):
    """n raw u64 words of stream `seed`, starting at counter `start`."""
    return backend.mix64_block(seed, start, n)


def uniform(seed, n, start=0):
    """n doubles in [0, 1) with 53-bit resolution."""
    w = words(seed, n, start)
    return (w >> np.uint64(11)).astype(np.float64) * _INV_2_53


def gaussian(seed, n, start_pair=0):
    """n standard-normal doubles via Box-Muller over word pairs.

    `start_pair` indexes Box-Muller pairs, letting callers continue a
    stream without regenerating earlier blocks.
    """
    pairs = (n + 1) // 2
    w = words(seed, 2 * pairs, start=2 * start_pair)
    # u1 in (0, 1] keeps log() finite; u2 in [0, 1)
    u1 = ((w[0::2] >> np.uint64(11)) + np.uint64(1)).astype(np.float64) * _INV_2_53
    u2 = (w[1::2] >> np.uint64(11)).astype(np.float64) * _INV_2_53
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = _TWO_PI * u2
    out = np.empty(2 * pairs, dtype=np.float64)
    out[0::2] = radius * np.cos(angle)
    out[1::2] = radius * np.sin(angle)
    return out[:n]


def permutation(seed, n):
    """Deterministic permutation of range(n): argsort of the word stream."""
    return np.argsort(words(seed, n), kind="stable")


def choice(seed, n, size):
    """`size` distinct indices from range(n), in permutation order."""
    if size > n:
        raise ValueError(f"cannot draw {size} distinct indices from {n}")
    return permutation(seed, n)[:size]
