"""Jitted inner loop for tree Monte Carlo.

One kernel samples a random marked tree *lazily* and evaluates the root:
children of a node are only visited while the node's map value is still
undetermined by the children seen so far (for the big-endian table layout
the undetermined completions form a contiguous table block, so the check is
a short scan).  Node marks are addressed by splittable counter-based keys
derived from the node's path, so the same (seed, tree index) always yields
the same tree regardless of which parts of it an evaluation happens to
explore.  This must stay bit-compatible with treefield.rng (tested).
"""

from __future__ import annotations

import numpy as np
from numba import config as _numba_config
from numba import njit, prange

_numba_config.THREADING_LAYER = "omp"

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.0 / (1 << 53)

# per-node draw labels; children hang off label SLOT_CHILD0 + child index
SLOT_LIFE = 0
SLOT_MAP = 1
SLOT_LEAF = 2
SLOT_CHILD0 = 3

_MAX_DEPTH = 4096

VALUE_BUDGET = -1  # exploration exceeded the node budget
VALUE_DEPTH = -2  # exploration exceeded the stack depth


@njit(cache=True, inline="always")
def _mix64(z):
    z = z + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def _derive(key, label):
    return _mix64(key ^ (np.uint64(label + 1) * _GOLDEN))


@njit(cache=True, inline="always")
def _u01(key):
    return (_mix64(key) >> np.uint64(11)) * _INV53


@njit(cache=True, inline="always")
def _from_cdf(cdf, u):
    for s in range(cdf.shape[0]):
        if u < cdf[s]:
            return s
    return cdf.shape[0] - 1


@njit(cache=True)
def _eval_root(n_states, cum_prob, arity, offset, table, total_rate, t, leaf_cdf,
               root_key, budget):
    """Root value of one lazily explored tree; returns (value, explored nodes)."""
    key_st = np.empty(_MAX_DEPTH, dtype=np.uint64)
    rem_st = np.empty(_MAX_DEPTH, dtype=np.float64)
    map_st = np.empty(_MAX_DEPTH, dtype=np.int64)
    child_st = np.empty(_MAX_DEPTH, dtype=np.int64)
    code_st = np.empty(_MAX_DEPTH, dtype=np.int64)
    top = -1
    explored = 0
    cur_key = root_key
    cur_rem = t
    while True:
        explored += 1
        if explored > budget:
            return VALUE_BUDGET, explored
        life = -np.log(1.0 - _u01(_derive(cur_key, SLOT_LIFE))) / total_rate
        if life > cur_rem:
            value = _from_cdf(leaf_cdf, _u01(_derive(cur_key, SLOT_LEAF)))
        else:
            m = _from_cdf(cum_prob, _u01(_derive(cur_key, SLOT_MAP)))
            if arity[m] == 0:
                value = table[offset[m]]
            else:
                top += 1
                if top >= _MAX_DEPTH:
                    return VALUE_DEPTH, explored
                key_st[top] = cur_key
                rem_st[top] = cur_rem - life
                map_st[top] = m
                child_st[top] = 0
                code_st[top] = 0
                cur_key = _derive(cur_key, SLOT_CHILD0)
                cur_rem = rem_st[top]
                continue
        # fold the value into parent frames while they become determined
        while True:
            if top < 0:
                return value, explored
            m = map_st[top]
            j = child_st[top] + 1
            code = code_st[top] * n_states + value
            block = 1
            for _ in range(arity[m] - j):
                block *= n_states
            base = offset[m] + code * block
            v0 = table[base]
            determined = True
            for rpos in range(1, block):
                if table[base + rpos] != v0:
                    determined = False
                    break
            if determined:
                value = v0
                top -= 1
                continue
            child_st[top] = j
            code_st[top] = code
            cur_key = _derive(key_st[top], SLOT_CHILD0 + j)
            cur_rem = rem_st[top]
            break


@njit(cache=True, parallel=True)
def batch_eval(n_states, cum_prob, arity, offset, table, total_rate, t, leaf_cdf,
               root_keys, budget):
    """Root values and explored-node counts for a batch of tree keys.

    Parallel over trees; every tree's draws are keyed by its own root key, so
    the result is identical on any thread schedule.
    """
    n = root_keys.shape[0]
    values = np.empty(n, dtype=np.int64)
    explored = np.empty(n, dtype=np.int64)
    for i in prange(n):
        v, e = _eval_root(n_states, cum_prob, arity, offset, table, total_rate, t,
                          leaf_cdf, root_keys[i], budget)
        values[i] = v
        explored[i] = e
    return values, explored
