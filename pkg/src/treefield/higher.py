"""Distribution-valued fixed points by population dynamics on [0,1].

A law on {0,1} is a number in [0,1] (its mass at 1), so a random law is a
random number and a law of laws is a distribution on [0,1], represented here
by a pool of M samples.  One sweep replaces every pool value by
hat_g(eta_1, ..., eta_k) where the map is rate-chosen and the eta_i are drawn
from the pre-sweep pool (double-buffered, with replacement).  hat maps are
evaluated in nested multilinear form with constant folding, so exact 0.0
inputs give exact 0.0 outputs and the atom at zero is representable without
binning.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import meanfield
from .errors import Unsupported
from .model import Dist, LocalMap, MapFamily, preset
from .rng import derive, derive_vec, key_from_seed, u01, u01_vec

_POOL_STREAM = 1  # key namespace separating pool draws from tree draws


@dataclass(frozen=True)
class HigherMap:
    """Lift of a {0,1} map to [0,1]^k: the probability that the map outputs 1
    when argument i is an independent one-probability eta_i.

    Equal to the multilinear polynomial sum over one-inputs x of
    prod_i eta_i^{x_i} (1-eta_i)^{1-x_i}; evaluated by splitting on the first
    argument with constant subtables folded, which reproduces the simplified
    closed forms (for cob: eta1 + (1-eta1) eta2 eta3).
    """

    name: str
    arity: int
    table: tuple[int, ...]

    def one_inputs(self) -> list[tuple[int, ...]]:
        from .model import decode

        return [decode(i, 2, self.arity) for i in range(2**self.arity) if self.table[i]]

    def _eval(self, table: tuple[int, ...], args: list):
        if all(v == table[0] for v in table):
            return float(table[0])
        half = len(table) // 2
        lo = self._eval(table[:half], args[1:])  # first argument is 0
        hi = self._eval(table[half:], args[1:])  # first argument is 1
        eta = args[0]
        if isinstance(hi, float) and hi == 0.0:
            return (1.0 - eta) * lo
        if isinstance(lo, float) and lo == 0.0:
            return eta * hi
        return eta * hi + (1.0 - eta) * lo

    def __call__(self, *args):
        if len(args) != self.arity:
            raise ValueError(f"{self.name} takes {self.arity} arguments")
        out = self._eval(self.table, list(args))
        if isinstance(out, float) and args and hasattr(args[0], "shape"):
            return np.full(args[0].shape, out)
        return out


def hat_map(g: LocalMap) -> HigherMap:
    """Lift a {0,1} map; larger state spaces are not supported."""
    if g.n_states != 2:
        raise Unsupported("hat maps are defined over {0,1} only")
    return HigherMap(g.name, g.arity, g.table)


@dataclass(frozen=True)
class SamplePool:
    """M values in [0,1] standing for a distribution of one-probabilities."""

    values: np.ndarray
    generation: int
    seed: int

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size < 1:
            raise ValueError("pool must be a nonempty vector")
        if v.min() < 0.0 or v.max() > 1.0:
            raise ValueError("pool values must lie in [0, 1]")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def size(self) -> int:
        return int(self.values.size)

    @classmethod
    def constant(cls, value: float, size: int, seed: int) -> "SamplePool":
        return cls(np.full(size, float(value)), 0, seed)


def _pool_key(seed: int, generation: int) -> int:
    return derive(derive(key_from_seed(seed), _POOL_STREAM), generation)


def pool_sweep(pool: SamplePool, family: MapFamily) -> SamplePool:
    """One application of the lifted operator to the empirical distribution.

    Every output picks a map with probability rate/total, draws its arity
    many parents uniformly with replacement from the pre-sweep pool, and
    applies the hat map.  Draw keys are (seed, generation, output index), so
    sweeps are reproducible and parallelizable over output indices.
    """
    M = pool.size
    gen_key = _pool_key(pool.seed, pool.generation)
    idx_keys = derive_vec(gen_key, np.arange(M, dtype=np.uint64))
    entry_u = u01_vec(idx_keys)  # slot 0 folded into the index key itself
    cum = np.cumsum([rate for _, rate in family.entries]) / family.total_rate
    choice = np.searchsorted(cum, entry_u, side="right")
    choice = np.minimum(choice, len(family.entries) - 1)

    max_arity = family.max_arity
    parents = []
    for j in range(max_arity):
        u = u01_vec(derive_vec(idx_keys, j + 1))
        parents.append(pool.values[(u * M).astype(np.int64)])

    out = np.empty(M)
    for e, (g, _) in enumerate(family.entries):
        mask = choice == e
        if not mask.any():
            continue
        hg = hat_map(g)
        if g.arity == 0:
            out[mask] = float(g.table[0])
        else:
            out[mask] = hg(*[parents[j][mask] for j in range(g.arity)])
    return SamplePool(out, pool.generation + 1, pool.seed)


def _anchor_mean(pool: SamplePool, target: float) -> SamplePool:
    """Pull the pool mean back to `target` by weighted systematic resampling.

    The sweep map amplifies mean fluctuations at the middle fixed point
    (multiplier > 1), so the 1/sqrt(M) per-sweep noise would otherwise
    compound and carry the pool to an extremal law.  Weights 1 + c(v - mean)
    with c solving the first-moment constraint tilt by O(1/sqrt(M)) only;
    resampling duplicates existing values, so exact atoms survive.
    """
    v = pool.values
    mean = v.mean()
    var = v.var()
    if var <= 0.0 or mean == target:
        return pool
    c = (target - mean) / var
    spread = np.abs(v - mean).max()
    if spread * abs(c) > 0.9:  # keep all weights positive
        c = math.copysign(0.9 / spread, c)
    w = 1.0 + c * (v - mean)
    cum = np.cumsum(w)
    cum /= cum[-1]
    u0 = u01(derive(_pool_key(pool.seed, pool.generation), 10**6))
    positions = (u0 + np.arange(v.size)) / v.size
    idx = np.searchsorted(cum, positions, side="right")
    idx = np.minimum(idx, v.size - 1)
    return SamplePool(v[idx], pool.generation, pool.seed)


@dataclass(frozen=True)
class PoolStats:
    mean: float
    m2: float
    atom0: float
    atom1: float
    cdf: np.ndarray  # F evaluated on the 1001-point uniform grid over [0,1]


def pool_stats(pool: SamplePool) -> PoolStats:
    """Mean, second moment, exact-0/1 fractions, and the empirical CDF."""
    v = pool.values
    grid = np.linspace(0.0, 1.0, 1001)
    F = np.searchsorted(np.sort(v), grid, side="right") / v.size
    return PoolStats(
        mean=float(v.mean()),
        m2=float((v * v).mean()),
        atom0=float((v == 0.0).mean()),
        atom1=float((v == 1.0).mean()),
        cdf=F,
    )


def cdf_to_csv(stats: PoolStats) -> str:
    grid = np.linspace(0.0, 1.0, 1001)
    rows = ["eta,F"]
    for x, F in zip(grid, stats.cdf):
        rows.append(f"{x:.17g},{F:.17g}")
    return "\n".join(rows) + "\n"


def stats_json(alpha: float, pool: SamplePool, sweeps: int, stats: PoolStats) -> str:
    return json.dumps(
        {
            "alpha": alpha,
            "M": pool.size,
            "sweeps": sweeps,
            "mean": stats.mean,
            "m2": stats.m2,
            "atom0": stats.atom0,
            "atom1": stats.atom1,
        },
        indent=2,
    )


@dataclass(frozen=True)
class HLSolution:
    pool: SamplePool
    converged: bool
    sweeps: int


def solve_hl_rde(
    alpha: float,
    M: int,
    sweeps: int,
    seed: int,
    anchor_mean: bool = True,
) -> HLSolution:
    """Minimal distribution-valued solution at the middle fixed point.

    Starts from the pool constant at z_mid (the point mass at the middle
    one-probability) and iterates sweeps; the limit is the nontrivial minimal
    solution.  Convergence is declared when mean, second moment, and the
    exact-zero fraction each move by less than 2/sqrt(M) over the last 10
    sweeps.  `anchor_mean` keeps the conserved mean pinned at z_mid (see
    _anchor_mean); disable it to observe the unanchored drift.
    """
    if alpha <= 4.0:
        raise ValueError("the middle branch needs alpha > 4")
    if M < 1:
        raise ValueError("pool size must be positive")
    z_mid = meanfield.coop_fixed_points(alpha)[1]
    family = preset("coop", alpha)
    pool = SamplePool.constant(z_mid, M, seed)
    window: list[tuple[float, float, float]] = []
    tol = 2.0 / math.sqrt(M)
    converged = False
    for _ in range(sweeps):
        pool = pool_sweep(pool, family)
        if anchor_mean:
            pool = _anchor_mean(pool, z_mid)
        v = pool.values
        window.append((float(v.mean()), float((v * v).mean()), float((v == 0.0).mean())))
        if len(window) > 10:
            window.pop(0)
        if len(window) == 10:
            spans = [max(col) - min(col) for col in zip(*window)]
            converged = all(s < tol for s in spans)
    return HLSolution(pool, converged, sweeps)


def moment_measure(pool: SamplePool, n: int) -> Dist:
    """n-th moment measure of the pool as a law on {0,1}^n (big-endian states).

    The weight of a pattern x is the pool average of
    eta^{sum x} (1-eta)^{n - sum x}.
    """
    if not 1 <= n <= 4:
        raise ValueError("moment measures implemented for n in 1..4")
    v = pool.values
    by_count = [
        float((v**k * (1.0 - v) ** (n - k)).mean()) for k in range(n + 1)
    ]
    weights = [by_count[bin(pattern).count("1")] for pattern in range(2**n)]
    return Dist(weights)


@dataclass(frozen=True)
class ConvexOrderReport:
    """Necessary-condition diagnostic for the convex order on [0,1].

    Checks E[phi(A)] <= E[phi(B)] + 3 se for phi in a hinge family plus
    +-identity; a finite grid of convex functions can refute but never prove
    the order.  max_violation is the worst raw difference E[phi(A)] - E[phi(B)].
    """

    leq: bool
    max_violation: float


def convex_order_compare(
    pool_a: SamplePool, pool_b: SamplePool, n_hinges: int = 21
) -> ConvexOrderReport:
    a, b = pool_a.values, pool_b.values

    def check(fa: np.ndarray, fb: np.ndarray) -> tuple[bool, float]:
        diff = fa.mean() - fb.mean()
        se = math.sqrt(fa.var() / fa.size + fb.var() / fb.size)
        return diff <= 3.0 * se, float(diff)

    tests = [(a, b), (-a, -b)]  # affine part: means must agree both ways
    for cpos in np.linspace(0.0, 1.0, n_hinges):
        tests.append((np.maximum(a - cpos, 0.0), np.maximum(b - cpos, 0.0)))
        tests.append((np.maximum(cpos - a, 0.0), np.maximum(cpos - b, 0.0)))
    ok = True
    worst = -math.inf
    for fa, fb in tests:
        passed, diff = check(fa, fb)
        ok = ok and passed
        worst = max(worst, diff)
    return ConvexOrderReport(ok, worst)
