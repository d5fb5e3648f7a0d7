"""Counter-based randomness keyed by (seed, namespace, key).

Every random quantity in the library is a pure function of a 64-bit seed and
an integer key, so exploration order never changes an outcome.  The mixer is
the SplitMix64 finalizer applied as a sponge over the key words.
"""

import numpy as np
from numba import njit

# Key namespaces.  Layer types and edge states must never share keys.
NS_LAYER = 1
NS_EDGE = 2
NS_SITE = 3
NS_COUPLING_EDGE = 4
NS_COUPLING_VERTICAL = 5
NS_COUPLING_SITE = 6
NS_BLOCK = 7

_MASK = 0xFFFFFFFFFFFFFFFF
_GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB

_U_GAMMA = np.uint64(_GAMMA)
_U_M1 = np.uint64(_M1)
_U_M2 = np.uint64(_M2)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True, nogil=True)
def mix64(z):
    z = (z ^ (z >> _S30)) * _U_M1
    z = (z ^ (z >> _S27)) * _U_M2
    return z ^ (z >> _S31)


@njit(cache=True, nogil=True)
def key_hash(seed, ns, k0, k1, k2, k3, k4, k5):
    h = mix64(np.uint64(seed) + _U_GAMMA)
    h = mix64(h ^ np.uint64(ns))
    h = mix64(h + np.uint64(k0) * _U_GAMMA)
    h = mix64(h + np.uint64(k1) * _U_GAMMA)
    h = mix64(h + np.uint64(k2) * _U_GAMMA)
    h = mix64(h + np.uint64(k3) * _U_GAMMA)
    h = mix64(h + np.uint64(k4) * _U_GAMMA)
    h = mix64(h + np.uint64(k5) * _U_GAMMA)
    return h


@njit(cache=True, nogil=True)
def key_uniform(seed, ns, k0, k1, k2, k3, k4, k5):
    """Uniform double in [0, 1) with 53 random bits."""
    return float(key_hash(seed, ns, k0, k1, k2, k3, k4, k5) >> _S11) * _INV53


def hash_words(seed: int, ns: int, key) -> int:
    """Pure-Python reference of :func:`key_hash` (arbitrary precision ints)."""

    def mix(z):
        z = ((z ^ (z >> 30)) * _M1) & _MASK
        z = ((z ^ (z >> 27)) * _M2) & _MASK
        return z ^ (z >> 31)

    words = tuple(key) + (0,) * (6 - len(key))
    h = mix((seed + _GAMMA) & _MASK)
    h = mix(h ^ (ns & _MASK))
    for w in words:
        h = mix((h + (w & _MASK) * _GAMMA) & _MASK)
    return h


def uniform(seed: int, ns: int, key) -> float:
    """Latent uniform for a key of at most six integer words."""
    words = tuple(key) + (0,) * (6 - len(key))
    return key_uniform(seed, ns, *words)


def derive_seed(seed: int, index: int) -> int:
    """Stable 63-bit child seed, used where seed arithmetic could overlap."""
    return hash_words(seed, 0, (index,)) >> 1
