"""SplitMix64 generator usable inside numba kernels.

State is a one-element uint64 array so it can be threaded through jitted code.
`subkey` hashes a key with integer labels, giving keyed substreams whose
output depends only on the labels, never on call order.
"""
import numpy as np
from numba import njit, uint64

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True, inline="always")
def mix64(z):
    z = uint64(z)
    z = (z ^ (z >> uint64(30))) * _M1
    z = (z ^ (z >> uint64(27))) * _M2
    return z ^ (z >> uint64(31))


@njit(cache=True)
def subkey(key, a, b, c):
    """Hash (key, a, b, c) into a fresh 64-bit key; a, b, c may be negative."""
    h = mix64(uint64(key) + _GOLDEN)
    h = mix64(h ^ uint64(np.int64(a) & np.int64(0x7FFFFFFFFFFFFFFF)) ^ (uint64(a < 0) << uint64(63)))
    h = mix64(h + _GOLDEN ^ uint64(np.int64(b) & np.int64(0x7FFFFFFFFFFFFFFF)) ^ (uint64(b < 0) << uint64(63)))
    h = mix64(h + _GOLDEN ^ uint64(np.int64(c) & np.int64(0x7FFFFFFFFFFFFFFF)) ^ (uint64(c < 0) << uint64(63)))
    return h


@njit(cache=True, inline="always")
def next_u64(st):
    st[0] = st[0] + _GOLDEN
    return mix64(st[0])


@njit(cache=True, inline="always")
def uniform(st):
    """Uniform on (0, 1), never exactly 0."""
    return ((next_u64(st) >> uint64(11)) + 0.5) * _INV53


@njit(cache=True, inline="always")
def exponential(st, rate):
    if rate <= 0.0:
        return np.inf
    return -np.log(uniform(st)) / rate


@njit(cache=True, inline="always")
def randbelow(st, n):
    """Uniform integer in [0, n)."""
    return np.int64(uniform(st) * n) % n


@njit(cache=True)
def poisson(st, lam):
    """Poisson(lam) by inversion for small lam, by splitting for large lam."""
    total = 0
    while lam > 30.0:
        # additivity keeps exp(-lam) away from underflow
        lam -= 30.0
        total += poisson(st, 30.0)
    if lam <= 0.0:
        return total
    u = uniform(st)
    p = np.exp(-lam)
    k = 0
    c = p
    while u > c:
        k += 1
        p *= lam / k
        c += p
        if p == 0.0:
            break
    return total + k


def make_state(key):
    return np.array([int(key) & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
