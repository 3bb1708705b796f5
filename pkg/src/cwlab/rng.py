"""Counter-based uniform variates built on the SplitMix64 finaliser.

Every uniform is a pure function of a key and a counter, so values can be
queried lazily, out of order, and from any number of threads.

Scheme (all arithmetic modulo 2**64)::

    mix(z)          = SplitMix64 finaliser
    key(seed, dom)  = mix(seed ^ (dom * GOLDEN))
    word(key, ctr)  = mix(key + (ctr + 1) * GOLDEN)
    unit(word)      = ((word >> 12) + 0.5) * 2**-52       # in [2**-53, 1 - 2**-53]

``word(key, .)`` is exactly the output stream of a SplitMix64 generator whose
state starts at ``key``.  Sub-keys (one per walker, say) are obtained by
``subkey(key, i) = mix(word(key, i))``.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB

# domain tags keep the environment and the walker streams apart
DOMAIN_ENV = 1
DOMAIN_WALK = 2
DOMAIN_ESCAPE = 3


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def key(seed: int, domain: int) -> int:
    if not 0 <= seed <= MASK64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return mix64(seed ^ ((domain * GOLDEN) & MASK64))


def word(k: int, counter: int) -> int:
    return mix64(k + ((counter + 1) * GOLDEN))


def subkey(k: int, index: int) -> int:
    return mix64(word(k, index))


def unit(w: int) -> float:
    return ((w >> 12) + 0.5) * 2.0**-52


def edge_counter(x: int) -> int:
    """Counter for edge ``{x, x+1}``: ``|x|`` shifted left, sign in bit 0."""
    return ((-x) << 1) | 1 if x < 0 else x << 1


# --- vectorised versions (uint64 arithmetic wraps modulo 2**64) -----------

_U_GOLDEN = np.uint64(GOLDEN)
_U_M1 = np.uint64(_M1)
_U_M2 = np.uint64(_M2)
_S30, _S27, _S31, _S12 = (np.uint64(s) for s in (30, 27, 31, 12))


def mix64_array(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _S30)) * _U_M1
        z = (z ^ (z >> _S27)) * _U_M2
    return z ^ (z >> _S31)


def word_array(k, counter) -> np.ndarray:
    k = np.asarray(k, dtype=np.uint64)
    c = np.asarray(counter, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = k + (c + np.uint64(1)) * _U_GOLDEN
    return mix64_array(z)


def subkey_array(k: int, index) -> np.ndarray:
    return mix64_array(word_array(np.uint64(k), index))


def unit_array(w: np.ndarray) -> np.ndarray:
    return ((w >> _S12).astype(np.float64) + 0.5) * 2.0**-52


def edge_counter_array(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    neg = x < 0
    mag = np.where(neg, -x, x).astype(np.uint64)
    return (mag << np.uint64(1)) | neg.astype(np.uint64)


def edge_uniforms(seed: int, x: np.ndarray) -> np.ndarray:
    """Uniforms attached to the edges ``{x, x+1}`` for a given seed."""
    return unit_array(word_array(np.uint64(key(seed, DOMAIN_ENV)), edge_counter_array(x)))


def edge_uniform(seed: int, x: int) -> float:
    return unit(word(key(seed, DOMAIN_ENV), edge_counter(x)))
