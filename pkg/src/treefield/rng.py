"""Counter-based splittable random numbers.

All randomness in this package flows through a stateless 64-bit mixing
function (the splitmix64 finalizer).  A draw is addressed by a key; keys are
derived from a seed and from integer labels (replica index, node path, sweep
generation, ...) by repeated mixing.  The same key always yields the same
draw, on any thread schedule and in any traversal order, which is what makes
runs bit-reproducible and lets two lazy traversals of the same random tree
see identical node marks without materializing the tree.

The scalar path uses plain Python ints masked to 64 bits; the vectorized
path uses numpy uint64 arrays.  Both compute the identical function (tested).
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_INV53 = 1.0 / (1 << 53)


def mix64(z: int) -> int:
    """splitmix64 finalizer on a 64-bit integer."""
    z = (z + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def key_from_seed(seed: int) -> int:
    return mix64(seed & MASK64)


def derive(key: int, label: int) -> int:
    """Child key for an integer label; labels >= 0 give disjoint streams."""
    return mix64(key ^ ((label + 1) * GOLDEN & MASK64))


def u01(key: int) -> float:
    """Uniform in [0, 1) addressed by key (top 53 bits of one more mix)."""
    return (mix64(key) >> 11) * _INV53


def mix64_vec(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):  # uint64 wraparound is the point
        z = z + np.uint64(GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
        return z ^ (z >> np.uint64(31))


def derive_vec(key: int | np.ndarray, labels: int | np.ndarray) -> np.ndarray:
    """Vector form of derive; either argument may be an array (broadcast)."""
    k = np.asarray(key, dtype=np.uint64)
    lab = np.asarray(labels, dtype=np.uint64) + np.uint64(1)
    with np.errstate(over="ignore"):
        return mix64_vec(k ^ (lab * np.uint64(GOLDEN)))


def u01_vec(keys: np.ndarray) -> np.ndarray:
    return (mix64_vec(keys) >> np.uint64(11)) * _INV53
