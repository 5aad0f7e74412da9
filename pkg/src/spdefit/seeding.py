"""Deterministic derivation of per-(replication, mode) random streams.

Every Fourier mode k inside replication r draws from its own counter-based
generator keyed by ``derive_seed(master_seed, r, k)``.  Streams are therefore
independent of execution order and of how work is split across processes.

The mixing function below is frozen: changing it silently would change every
simulated path, so treat it as part of the on-disk format.
"""

from __future__ import annotations

import numpy as np

_MASK = 0xFFFFFFFFFFFFFFFF
_GOLDEN = 0x9E3779B97F4A7C15
_MULT1 = 0xBF58476D1CE4E5B9
_MULT2 = 0x94D049BB133111EB


def _finalize(x: int) -> int:
    # splitmix64 finalizer: xor-shift / multiply / xor-shift / multiply / xor-shift
    x &= _MASK
    x ^= x >> 30
    x = (x * _MULT1) & _MASK
    x ^= x >> 27
    x = (x * _MULT2) & _MASK
    x ^= x >> 31
    return x


def derive_seed(master: int, rep: int, k: int) -> int:
    """Collision-resistant 64-bit stream seed for (master, replication, mode).

    Two finalizer rounds over the packed triple; master=0 is a valid input
    with no special-casing.
    """
    h = _finalize((master & _MASK) ^ _GOLDEN)
    h = _finalize(h ^ ((rep * _GOLDEN + 1) & _MASK))
    h = _finalize(h ^ ((k * _MULT1 + 2) & _MASK))
    return h


def derive_seed_array(master: int, rep, k) -> np.ndarray:
    """Vectorized twin of :func:`derive_seed` (used for collision scans)."""
    rep = np.asarray(rep, dtype=np.uint64)
    k = np.asarray(k, dtype=np.uint64)

    def fin(x):
        x = x.astype(np.uint64, copy=True)
        x ^= x >> np.uint64(30)
        x *= np.uint64(_MULT1)
        x ^= x >> np.uint64(27)
        x *= np.uint64(_MULT2)
        x ^= x >> np.uint64(31)
        return x

    h0 = np.uint64(_finalize((master & _MASK) ^ _GOLDEN))
    h = fin(h0 ^ (rep * np.uint64(_GOLDEN) + np.uint64(1)))
    h = fin(h ^ (k * np.uint64(_MULT1) + np.uint64(2)))
    return h


def mode_stream(master: int, rep: int, k: int) -> np.random.Generator:
    """Counter-based generator for mode k of replication rep."""
    return np.random.Generator(np.random.Philox(key=derive_seed(master, rep, k)))
