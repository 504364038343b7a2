"""Random marked trees: sampling, evaluation, and tree-combinatorial analyses.

The genealogy of one site run backward in time is a branching tree: each
individual lives an exponential time (mean 1/total_rate), then is replaced by
the arguments of a rate-chosen map.  Boundary individuals (alive at the
horizon) carry states; folding the maps from the boundary to the root gives
the root state, and the law of that state is exactly the mean-field semigroup
applied to the boundary law.

Trees are stored in a flat arena in breadth order.  All node marks are
addressed by splittable path-derived keys (see rng), so a materialized tree,
a lazily explored one, and re-runs at different horizons all agree on the
shared part of the realization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from . import model
from ._kernels import (SLOT_CHILD0, SLOT_LEAF, SLOT_LIFE, SLOT_MAP,
                       VALUE_BUDGET, VALUE_DEPTH, batch_eval)
from .errors import BudgetExceeded, EnumerationCap
from .model import Dist, LocalMap, MapFamily, encode
from .rng import derive, derive_vec, key_from_seed, u01

DEFAULT_BUDGET = 10**6  # materialized trees (arena memory)
SCAN_BUDGET = 10**8  # lazy explorations are streaming; this guards runtime only
BRUTE_CAP = 1 << 20


def tree_root_key(seed: int, index: int = 0) -> int:
    """Key of replica `index`; identical (seed, index) gives an identical tree."""
    return derive(derive(key_from_seed(seed), 0), index)


@dataclass
class MarkedTree:
    """Arena of one sampled tree, nodes in breadth order (root is node 0).

    Internal nodes died before the horizon and carry a map (index into the
    family's entries); boundary nodes are alive at the horizon, carry no map,
    and are listed in `leaves`.  Children of node i occupy ids
    child_start[i] .. child_start[i]+child_count[i]-1.
    """

    horizon: float
    map_idx: list[int]  # -1 for boundary nodes
    birth: list[float]
    death: list[float]
    parent: list[int]
    child_start: list[int]
    child_count: list[int]
    keys: list[int]
    leaves: list[int]

    @property
    def n_nodes(self) -> int:
        return len(self.map_idx)

    def is_leaf(self, i: int) -> bool:
        return self.map_idx[i] < 0

    def depth(self, i: int) -> int:
        d = 0
        while self.parent[i] >= 0:
            i = self.parent[i]
            d += 1
        return d

    def word(self, i: int) -> tuple[int, ...]:
        """Paper-style address of node i: the 1-based child positions from the root."""
        out = []
        while self.parent[i] >= 0:
            p = self.parent[i]
            out.append(i - self.child_start[p] + 1)
            i = p
        return tuple(reversed(out))


def sample_tree(
    family: MapFamily,
    t: float,
    seed: int,
    index: int = 0,
    budget: int = DEFAULT_BUDGET,
) -> MarkedTree:
    """Sample the full genealogy up to horizon t.

    Each live individual dies at rate total_rate; on death a map is chosen
    with probability rate/total_rate and arity-many children are born.  Nodes
    are created in breadth order; draws are keyed by the node path, so the
    realization is independent of traversal details.
    """
    if t < 0:
        raise ValueError("horizon must be >= 0")
    total = family.total_rate
    cum = np.cumsum([rate for _, rate in family.entries]) / total
    entries = family.entries
    root_key = tree_root_key(seed, index)

    map_idx: list[int] = []
    birth: list[float] = []
    death: list[float] = []
    parent: list[int] = []
    child_start: list[int] = []
    child_count: list[int] = []
    keys: list[int] = []
    leaves: list[int] = []

    queue: list[tuple[int, float, int]] = [(root_key, 0.0, -1)]
    head = 0
    while head < len(queue):
        key, b, par = queue[head]
        head += 1
        i = len(map_idx)
        if i >= budget:
            raise BudgetExceeded(
                f"tree grew past {budget} nodes at horizon {t}; lower t or raise the budget"
            )
        life = -math.log(1.0 - u01(derive(key, SLOT_LIFE))) / total
        d = b + life
        keys.append(key)
        birth.append(b)
        death.append(d)
        parent.append(par)
        if d > t:
            map_idx.append(-1)
            child_start.append(0)
            child_count.append(0)
            leaves.append(i)
            continue
        u = u01(derive(key, SLOT_MAP))
        m = int(np.searchsorted(cum, u, side="right"))
        m = min(m, len(entries) - 1)
        k = entries[m][0].arity
        map_idx.append(m)
        child_start.append(len(queue))
        child_count.append(k)
        for j in range(k):
            queue.append((derive(key, SLOT_CHILD0 + j), d, i))
    return MarkedTree(t, map_idx, birth, death, parent, child_start, child_count,
                      keys, leaves)


def dump_tree(tree: MarkedTree, family: MapFamily) -> str:
    """Debug/golden format: one node per line `id,parent,map_name,tau_birth,tau_death,is_leaf`."""
    rows = []
    for i in range(tree.n_nodes):
        m = tree.map_idx[i]
        name = "" if m < 0 else family.entries[m][0].name
        rows.append(
            f"{i},{tree.parent[i]},{name},{tree.birth[i]:.17g},{tree.death[i]:.17g},"
            f"{int(m < 0)}"
        )
    return "\n".join(rows) + "\n"


LeafAssignment = dict  # leaf id -> state


def corner_assignment(tree: MarkedTree, state: int) -> LeafAssignment:
    return {i: state for i in tree.leaves}


def evaluate(tree: MarkedTree, family: MapFamily, assignment: LeafAssignment) -> int:
    """Fold the maps from the boundary to the root and return the root state."""
    values = [0] * tree.n_nodes
    for i in range(tree.n_nodes - 1, -1, -1):
        m = tree.map_idx[i]
        if m < 0:
            values[i] = assignment[i]
        else:
            g = family.entries[m][0]
            cs = tree.child_start[i]
            args = values[cs : cs + tree.child_count[i]]
            values[i] = g.table[encode(args, g.n_states)]
    return values[0]


# --- fast Monte Carlo plumbing ------------------------------------------------


@lru_cache(maxsize=None)
def _packed(family: MapFamily):
    cum = np.cumsum([rate for _, rate in family.entries]) / family.total_rate
    arity = np.array([g.arity for g, _ in family.entries], dtype=np.int64)
    offsets = np.zeros(len(family.entries), dtype=np.int64)
    flat: list[int] = []
    for idx, (g, _) in enumerate(family.entries):
        offsets[idx] = len(flat)
        flat.extend(g.table)
    table = np.array(flat, dtype=np.int64)
    return cum, arity, offsets, table


def _batch_root_values(
    family: MapFamily,
    t: float,
    leaf_cdf: np.ndarray,
    root_keys: np.ndarray,
    budget: int,
) -> tuple[np.ndarray, np.ndarray]:
    cum, arity, offsets, table = _packed(family)
    values, explored = batch_eval(
        family.space.size, cum, arity, offsets, table, family.total_rate,
        float(t), leaf_cdf, root_keys, budget,
    )
    if (values == VALUE_BUDGET).any():
        raise BudgetExceeded(
            f"a tree exploration passed {budget} nodes at horizon {t}"
        )
    if (values == VALUE_DEPTH).any():
        raise BudgetExceeded("tree exploration exceeded the recursion depth bound")
    return values, explored


def _replica_keys(seed: int, n: int) -> np.ndarray:
    stream = derive(key_from_seed(seed), 0)
    return derive_vec(stream, np.arange(n, dtype=np.uint64))


def root_value_reference(
    family: MapFamily, t: float, seed: int, index: int, mu0: Dist,
    budget: int = DEFAULT_BUDGET,
) -> int:
    """Pure-Python twin of the jitted root evaluation: materialize the tree,
    draw every boundary state from mu0 by the same keyed draws, fold fully.
    Used to cross-check the kernel for exact per-tree agreement."""
    tree = sample_tree(family, t, seed, index, budget)
    cdf = mu0.cdf()
    assignment = {
        i: int(np.searchsorted(cdf, u01(derive(tree.keys[i], SLOT_LEAF)), side="right"))
        for i in tree.leaves
    }
    assignment = {i: min(s, len(mu0) - 1) for i, s in assignment.items()}
    return evaluate(tree, family, assignment)


@dataclass(frozen=True)
class MCEstimate:
    """Empirical root-state law with per-state binomial standard errors."""

    dist: Dist
    stderr: np.ndarray
    n_samples: int

    def to_csv(self) -> str:
        rows = ["state,probability,stderr"]
        for s, (p, se) in enumerate(zip(self.dist.weights, self.stderr)):
            rows.append(f"{s},{p:.17g},{se:.17g}")
        return "\n".join(rows) + "\n"


def mc_estimate_Tt(
    family: MapFamily,
    mu0: Dist,
    t: float,
    n_samples: int,
    seed: int,
    budget: int = DEFAULT_BUDGET,
) -> MCEstimate:
    """Monte Carlo of the semigroup: per sample, draw a tree at horizon t,
    draw i.i.d. boundary states from mu0, fold to the root."""
    if n_samples < 1:
        raise ValueError("need at least one sample")
    keys = _replica_keys(seed, n_samples)
    values, _ = _batch_root_values(family, t, mu0.cdf(), keys, budget)
    n_states = family.space.size
    counts = np.bincount(values, minlength=n_states).astype(float)
    probs = counts / n_samples
    stderr = np.sqrt(probs * (1.0 - probs) / n_samples)
    return MCEstimate(Dist(probs if probs.sum() > 0 else counts + 1), stderr, n_samples)


# --- root-determining analysis -------------------------------------------------


def _subtree_boundary(tree: MarkedTree, in_set: Sequence[bool]) -> list[int]:
    """Nodes outside the subtree whose parent is inside (the relative boundary)."""
    out = []
    for i in range(tree.n_nodes):
        p = tree.parent[i]
        if not in_set[i] and (p >= 0 and in_set[p]):
            out.append(i)
    return out


def _eval_subtree(
    tree: MarkedTree, family: MapFamily, in_set: Sequence[bool], boundary_state: dict
) -> int:
    values = [0] * tree.n_nodes
    for i in range(tree.n_nodes - 1, -1, -1):
        if not in_set[i]:
            if i in boundary_state:
                values[i] = boundary_state[i]
            continue
        g = family.entries[tree.map_idx[i]][0]
        cs = tree.child_start[i]
        args = values[cs : cs + tree.child_count[i]]
        values[i] = g.table[encode(args, g.n_states)]
    return values[0]


def _subtree_constant(
    tree: MarkedTree, family: MapFamily, in_set: Sequence[bool], cap: int = BRUTE_CAP
) -> bool:
    """Is the folded map of this subtree constant in its boundary states?"""
    if not in_set[0]:
        return False  # a bare boundary node is the identity map
    boundary = _subtree_boundary(tree, in_set)
    n = family.space.size
    if family.is_monotone():
        lo = _eval_subtree(tree, family, in_set, {i: 0 for i in boundary})
        hi = _eval_subtree(tree, family, in_set, {i: n - 1 for i in boundary})
        return lo == hi
    if n ** len(boundary) > cap:
        raise EnumerationCap(
            f"{n}^{len(boundary)} boundary assignments exceed the cap {cap}"
        )
    first = None
    for code in range(n ** len(boundary)):
        states = model.decode(code, n, len(boundary))
        v = _eval_subtree(tree, family, in_set, dict(zip(boundary, states)))
        if first is None:
            first = v
        elif v != first:
            return False
    return True


def is_root_determining(tree: MarkedTree, family: MapFamily, cap: int = BRUTE_CAP) -> bool:
    """True when the folded boundary-to-root map is constant.

    Monotone families only need the all-minimal and all-maximal assignments
    (the folded map is squeezed between them); otherwise all boundary
    assignments are enumerated, capped.
    """
    in_set = [not tree.is_leaf(i) for i in range(tree.n_nodes)]
    if not any(in_set):
        return False  # a single boundary node: the identity map
    return _subtree_constant(tree, family, in_set, cap)


def find_minimal_root_determining(
    tree: MarkedTree, family: MapFamily, cap: int = BRUTE_CAP
) -> Optional[list[int]]:
    """Shrink the internal node set to a minimal root-determining subtree.

    Greedy removal of frontier nodes (nodes whose children are all outside
    the current set), deepest first with smallest id as tie-break, restarting
    after every successful removal; a set none of whose single-node removals
    stays root-determining is minimal.  Returns sorted node ids, or None when
    the whole tree is not root-determining.
    """
    in_set = [not tree.is_leaf(i) for i in range(tree.n_nodes)]
    if not any(in_set) or not _subtree_constant(tree, family, in_set, cap):
        return None
    depths = [tree.depth(i) for i in range(tree.n_nodes)]
    while True:
        frontier = [
            i
            for i in range(tree.n_nodes)
            if in_set[i]
            and not any(
                in_set[c]
                for c in range(tree.child_start[i], tree.child_start[i] + tree.child_count[i])
            )
        ]
        frontier.sort(key=lambda i: (-depths[i], i))
        removed = False
        for i in frontier:
            in_set[i] = False
            if _subtree_constant(tree, family, in_set, cap):
                removed = True
                break
            in_set[i] = True
        if not removed:
            return [i for i in range(tree.n_nodes) if in_set[i]]


# --- uniqueness scan ------------------------------------------------------------


def _fixes_corner(family: MapFamily, state: int) -> bool:
    """Does every map send the constant-`state` tuple to `state`?"""
    n = family.space.size
    return all(
        g.table[encode([state] * g.arity, n)] == state for g, _ in family.entries
    )


def _corner_values(
    family: MapFamily, t: float, state: int, root_keys: np.ndarray, budget: int
) -> np.ndarray:
    if _fixes_corner(family, state):
        return np.full(root_keys.shape[0], state, dtype=np.int64)
    cdf = Dist.point(state, family.space.size).cdf()
    values, _ = _batch_root_values(family, t, cdf, root_keys, budget)
    return values


def uniqueness_scan(
    family: MapFamily,
    t_grid: Sequence[float],
    n_samples: int,
    seed: int,
    budget: int = SCAN_BUDGET,
) -> list[float]:
    """Fraction of sampled trees whose folded map is constant, per horizon.

    Constancy is monotone in the horizon along one realization, so trees
    already constant at an earlier grid point are not re-evaluated.  Needs a
    monotone family (constancy is decided by comparing the two corner
    evaluations).
    """
    if any(b <= a for a, b in zip(t_grid, list(t_grid)[1:])):
        raise ValueError("t_grid must be strictly increasing")
    if not family.is_monotone():
        raise ValueError("the scan needs a monotone family with ordered states")
    n = family.space.size
    keys = _replica_keys(seed, n_samples)
    alive = np.ones(n_samples, dtype=bool)  # not yet known constant
    fractions = []
    for t in t_grid:
        if t == 0.0:
            fractions.append(0.0)  # the identity map is never constant
            continue
        pending = keys[alive]
        if pending.size:
            lo = _corner_values(family, t, 0, pending, budget)
            hi = _corner_values(family, t, n - 1, pending, budget)
            newly_const = lo == hi
            idx = np.flatnonzero(alive)
            alive[idx[newly_const]] = False
        fractions.append(1.0 - alive.sum() / n_samples)
    return fractions


# --- open subtrees and duality ---------------------------------------------------


def minimal_one_sets_of_map(g: LocalMap) -> list[tuple[int, ...]]:
    """Minimal inputs y with g(y) = 1, as 0/1 indicator tuples ({0,1} maps only)."""
    if g.n_states != 2:
        raise ValueError("minimal one-sets are defined for {0,1} maps")
    ones = [model.decode(i, 2, g.arity) for i in range(2**g.arity) if g.table[i] == 1]
    out = []
    for y in ones:
        if not any(y != z and all(a <= b for a, b in zip(z, y)) for z in ones):
            out.append(y)
    return out


def _require_open_subtree_family(family: MapFamily) -> None:
    if family.space.size != 2:
        raise ValueError("open-subtree analysis is defined over {0,1}")
    if not family.is_monotone():
        raise ValueError("open-subtree analysis needs monotone maps")
    for g, _ in family.entries:
        if g.arity >= 1 and g.table[0] != 0:
            raise ValueError(
                f"map {g.name} sends the all-zero input to 1; only arity-0 maps may do that"
            )


@dataclass(frozen=True)
class OpenSubtreeReport:
    exists: bool
    exists_finite: bool
    minimal_one_sets: list[tuple[int, ...]]  # indicators over tree.leaves order


def open_subtrees(
    tree: MarkedTree, family: MapFamily, cap: int = 10**4
) -> OpenSubtreeReport:
    """Open-subtree analysis of one tree.

    An open subtree contains the root and, at every internal node it passes
    through, continues into a child set that is minimal for the node's map to
    output 1.  One exists iff the root folds to 1 under the all-one boundary;
    a finite one (never touching the boundary) exists iff the root folds to 1
    under the all-zero boundary.  The minimal boundary sets forcing root
    value 1 are enumerated bottom-up, capped at `cap` sets per node.
    """
    _require_open_subtree_family(family)
    exists = evaluate(tree, family, corner_assignment(tree, 1)) == 1
    exists_finite = evaluate(tree, family, corner_assignment(tree, 0)) == 1

    leaf_pos = {leaf: j for j, leaf in enumerate(tree.leaves)}
    sets_at: list[list[frozenset[int]]] = [[] for _ in range(tree.n_nodes)]
    for i in range(tree.n_nodes - 1, -1, -1):
        m = tree.map_idx[i]
        if m < 0:
            sets_at[i] = [frozenset((leaf_pos[i],))]
            continue
        g = family.entries[m][0]
        cs = tree.child_start[i]
        collected: list[frozenset[int]] = []
        for y in minimal_one_sets_of_map(g):
            partial = [frozenset()]
            for j, bit in enumerate(y):
                if not bit:
                    continue
                partial = [s | c for s in partial for c in sets_at[cs + j]]
                if len(partial) > cap:
                    raise EnumerationCap(f"more than {cap} minimal sets at node {i}")
            collected.extend(partial)
        # prune dominated sets so only minimal ones survive
        minimal = [
            s for s in collected if not any(z != s and z <= s for z in collected)
        ]
        sets_at[i] = list(dict.fromkeys(minimal))
        if len(sets_at[i]) > cap:
            raise EnumerationCap(f"more than {cap} minimal sets at node {i}")

    indicators = []
    for s in sets_at[0]:
        vec = [0] * len(tree.leaves)
        for j in s:
            vec[j] = 1
        indicators.append(tuple(vec))
    return OpenSubtreeReport(exists, exists_finite, indicators)


@dataclass(frozen=True)
class DualityEstimate:
    """One-sided monotone bounds on the extremal one-probabilities.

    upper decreases in t toward the maximal solution's mass at 1; lower
    increases in t toward the minimal solution's mass at 1.
    """

    nu_upp_1: float
    nu_upp_se: float
    nu_low_1: float
    nu_low_se: float
    n_samples: int


def duality_estimate(
    family: MapFamily,
    t: float,
    n_samples: int,
    seed: int,
    budget: int = SCAN_BUDGET,
) -> DualityEstimate:
    """Monte Carlo over trees at horizon t of P[an open subtree exists]
    (upper) and P[a finite open subtree exists] (lower)."""
    _require_open_subtree_family(family)
    keys = _replica_keys(seed, n_samples)
    hi = _corner_values(family, t, 1, keys, budget)
    lo = _corner_values(family, t, 0, keys, budget)
    p_hi = float((hi == 1).mean())
    p_lo = float((lo == 1).mean())
    se = lambda p: math.sqrt(p * (1.0 - p) / n_samples)
    return DualityEstimate(p_hi, se(p_hi), p_lo, se(p_lo), n_samples)


def boundary_sizes(
    family: MapFamily, t: float, n_samples: int, seed: int, budget: int = DEFAULT_BUDGET
) -> np.ndarray:
    """|boundary| of n sampled trees (for growth checks: mean is e^{K t})."""
    out = np.empty(n_samples, dtype=np.int64)
    for i in range(n_samples):
        out[i] = len(sample_tree(family, t, seed, i, budget).leaves)
    return out
