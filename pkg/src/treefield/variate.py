"""Two copies driven by the same randomness: the bivariate operator and ODE.

Lifting a map g to pairs acts diagonally: the same g is applied to both
coordinates of each argument pair.  On {0,1}^2 a symmetric pair law is a
point (p, r) with p the marginal mass at 1 and r the mass of "at least one
coordinate is 1"; the pair ODE closes in these two scalars.  The off-diagonal
rest point of the r-equation at fixed p is the middle root of a cubic, found
exactly by deflating the known root r = p and solving the quadratic factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import meanfield, model
from .errors import ArityOverflow, StepTooLarge
from .model import Dist, LocalMap, MapFamily, StateSpace, decode, encode

# Pair states are ordered (0,0), (0,1), (1,0), (1,1) (big-endian encoding).


@dataclass(frozen=True)
class PairDist:
    """Probability vector on {0,1}^2; `symmetric` asserts weight(0,1) = weight(1,0)."""

    weights: tuple[float, float, float, float]
    symmetric: bool = False

    def __post_init__(self) -> None:
        w = self.weights
        if any(x < -1e-12 for x in w):
            raise ValueError("negative pair weight")
        total = sum(w)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"pair weights sum to {total}")
        norm = tuple(max(x, 0.0) / total for x in w)
        object.__setattr__(self, "weights", norm)
        if self.symmetric and abs(norm[1] - norm[2]) > 1e-12:
            raise ValueError("pair law is not symmetric")

    def as_dist(self) -> Dist:
        return Dist(self.weights)

    def marginals(self) -> tuple[Dist, Dist]:
        w = self.weights
        first = Dist((w[0] + w[1], w[2] + w[3]))
        second = Dist((w[0] + w[2], w[1] + w[3]))
        return first, second


@dataclass(frozen=True)
class PRPoint:
    """(p, r) coordinates of a symmetric pair law: p = P[X=1], r = P[X=1 or Y=1]."""

    p: float
    r: float

    def __post_init__(self) -> None:
        eps = 1e-9
        ok = (-eps <= self.p <= 1 + eps) and (self.p - eps <= self.r <= min(1.0, 2 * self.p) + eps)
        if not ok:
            raise ValueError(f"({self.p}, {self.r}) outside the admissible region")


def pair_from_pr(point: PRPoint) -> PairDist:
    p, r = point.p, point.r
    return PairDist((1.0 - r, r - p, r - p, 2.0 * p - r), symmetric=True)


def pr_from_pair(pair: PairDist) -> PRPoint:
    w = pair.weights
    if abs(w[1] - w[2]) > 1e-12:
        raise ValueError("(p, r) coordinates need a symmetric pair law")
    return PRPoint(p=w[2] + w[3], r=w[1] + w[2] + w[3])


def lift_map(g: LocalMap, n: int, cap: int = model.ENUM_CAP) -> LocalMap:
    """Diagonal action of g on n-tuples; the lifted space has n_states^n states."""
    if n < 1:
        raise ValueError("n must be >= 1")
    base = g.n_states
    lifted_states = base**n
    if lifted_states**g.arity > cap:
        raise ArityOverflow(f"{lifted_states}^{g.arity} inputs exceed the cap {cap}")
    k = g.arity
    table = []
    for idx in range(lifted_states**k):
        args = decode(idx, lifted_states, k)  # k lifted states
        coords = [decode(a, base, n) for a in args]  # each an n-tuple
        out = tuple(g.table[encode([c[j] for c in coords], base)] for j in range(n))
        table.append(encode(out, base))
    return LocalMap(g.name, k, lifted_states, tuple(table))


def lift_family(family: MapFamily, n: int, cap: int = model.ENUM_CAP) -> MapFamily:
    space = StateSpace(family.space.size**n)
    return MapFamily(space, tuple((lift_map(g, n, cap), rate) for g, rate in family.entries))


def apply_T2(family: MapFamily, mu2: PairDist, cap: int = model.ENUM_CAP) -> PairDist:
    """Exact one-step operator on pair laws (both coordinates share the map draw)."""
    if family.space.size != 2:
        raise ValueError("pair operator is implemented for two-state families")
    lifted = lift_family(family, 2, cap)
    out = meanfield.apply_T(lifted, mu2.as_dist(), cap)
    sym = abs(out[1] - out[2]) <= 1e-12
    return PairDist(tuple(out.weights), symmetric=sym)


def drift_p(alpha: float, p: float) -> float:
    return alpha * p * p * (1.0 - p) - p


def drift_r(alpha: float, p: float, r: float) -> float:
    return alpha * (r * r - 2.0 * (r - p) ** 2) * (1.0 - r) - r


def bivariate_ode(
    alpha: float,
    start: PRPoint,
    t_end: float,
    dt: float = 1e-3,
    record_every: int = 1,
) -> list[tuple[float, PRPoint]]:
    """RK4 on the closed (p, r) system; the trajectory is clipped to the
    admissible region (violations beyond 1e-6 raise StepTooLarge)."""
    if t_end < 0 or dt <= 0:
        raise ValueError("need t_end >= 0 and dt > 0")
    p, r = start.p, start.r
    out = [(0.0, start)]
    steps = max(1, int(round(t_end / dt))) if t_end > 0 else 0
    h = t_end / steps if steps else 0.0

    def f(p: float, r: float) -> tuple[float, float]:
        return drift_p(alpha, p), drift_r(alpha, p, r)

    for i in range(steps):
        k1 = f(p, r)
        k2 = f(p + 0.5 * h * k1[0], r + 0.5 * h * k1[1])
        k3 = f(p + 0.5 * h * k2[0], r + 0.5 * h * k2[1])
        k4 = f(p + h * k3[0], r + h * k3[1])
        p += (h / 6.0) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        r += (h / 6.0) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        lo, hi = p, min(1.0, 2.0 * p)
        if p < -1e-6 or p > 1 + 1e-6 or r < lo - 1e-6 or r > hi + 1e-6:
            raise StepTooLarge("pair trajectory left the admissible region; reduce dt")
        p = min(max(p, 0.0), 1.0)
        r = min(max(r, lo), hi)
        if (i + 1) % record_every == 0 or i == steps - 1:
            out.append(((i + 1) * h, PRPoint(p, r)))
    return out


def pr_to_csv(path_points: list[tuple[float, PRPoint]]) -> str:
    rows = ["t,p,r"]
    for t, pt in path_points:
        rows.append(f"{t:.17g},{pt.p:.17g},{pt.r:.17g}")
    return "\n".join(rows) + "\n"


def off_diagonal_rest_point(alpha: float, p: float) -> float:
    """Middle root of the cubic r-drift at fixed marginal p.

    r = p is always a root; dividing it out leaves
    alpha r^2 - alpha (1 + 3p) r + (alpha (3p - p^2) - 1) = 0,
    whose smaller root is the attracting off-diagonal rest value in (p, 2p].
    """
    b = -(1.0 + 3.0 * p)
    c = (3.0 * p - p * p) - 1.0 / alpha
    disc = b * b - 4.0 * c
    if disc < 0:
        raise ValueError("no real off-diagonal rest point")
    root = (-b - math.sqrt(disc)) / 2.0
    return root


def bivariate_fixed_points(alpha: float) -> list[PRPoint]:
    """All rest points of the (p, r) system in the admissible region."""
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    zs = meanfield.coop_fixed_points(alpha)
    out = [PRPoint(z, z) for z in zs]
    if alpha > 4.0:
        z_mid = zs[1]
        r_mid = off_diagonal_rest_point(alpha, z_mid)
        if not (z_mid < r_mid <= 2.0 * z_mid + 1e-12):
            raise ValueError("off-diagonal root fell outside (z_mid, 2 z_mid]")
        out.insert(2, PRPoint(z_mid, r_mid))
    return out


@dataclass(frozen=True)
class EndogenyFlags:
    """Per fixed point: does the pair coupling started from the independent
    product at that point collapse back onto the diagonal?"""

    low: bool
    mid: Optional[bool]
    upp: Optional[bool]


def _attraction_rate(alpha: float, z: float, r_end: float) -> float:
    """|d/dr drift_r| near the expected limit, for choosing the horizon."""
    eps = 1e-7
    slope = (drift_r(alpha, z, r_end + eps) - drift_r(alpha, z, r_end - eps)) / (2 * eps)
    return abs(slope) if slope < 0 else 1.0


def classify_endogeny(alpha: float, tol: float = 1e-6) -> EndogenyFlags:
    """Endogeny test per fixed point z: start the pair coupling from the
    independent product (z, 2z - z^2) and call the point endogenous when the
    limit lands back on the diagonal r = z.

    The marginal stays at z on this fiber exactly, so only the r-equation is
    integrated (integrating p too would let round-off excite the unstable
    marginal direction at the middle fixed point).
    """
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    zs = meanfield.coop_fixed_points(alpha)

    def is_diagonal(z: float) -> bool:
        if z == 0.0:
            return True  # product start (0, 0) is already the rest point
        r = 2.0 * z - z * z
        horizon = min(max(200.0 / _attraction_rate(alpha, z, z), 50.0), 400.0)
        dt = 1e-3
        steps = int(round(horizon / dt))
        for _ in range(steps):
            k1 = drift_r(alpha, z, r)
            k2 = drift_r(alpha, z, r + 0.5 * dt * k1)
            k3 = drift_r(alpha, z, r + 0.5 * dt * k2)
            k4 = drift_r(alpha, z, r + dt * k3)
            r += (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            r = min(max(r, z), min(1.0, 2.0 * z))
        return abs(r - z) < tol

    low = is_diagonal(zs[0])
    mid = is_diagonal(zs[1]) if len(zs) >= 2 else None
    upp = is_diagonal(zs[-1]) if len(zs) >= 2 else None
    return EndogenyFlags(low, mid, upp)
