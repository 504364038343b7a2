"""Exact one-step operator and the mean-field ODE on the probability simplex.

`apply_T` is the exact push-forward mixture: pick a map with probability
rate/total_rate and apply it to i.i.d. draws from the input law.  The
mean-field ODE d mu/dt = total_rate * (T(mu) - mu) is integrated with
classical fixed-step RK4; the drift is tangent to the simplex, so the
solution stays on it up to round-off, which is clipped and renormalized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from . import model
from .errors import ArityOverflow, StepTooLarge
from .model import Dist, LocalMap, MapFamily, constants


@lru_cache(maxsize=None)
def _push_arrays(g: LocalMap) -> tuple[np.ndarray, np.ndarray]:
    """(digits, out) with digits[i, j] = j-th coordinate of input i, out[i] = g(input i)."""
    n, k = g.n_states, g.arity
    count = n**k
    digits = np.empty((count, k), dtype=np.int64)
    for j in range(k):
        block = n ** (k - 1 - j)
        digits[:, j] = (np.arange(count) // block) % n
    out = np.asarray(g.table, dtype=np.int64)
    return digits, out


def apply_Tg(g: LocalMap, mu: Dist, cap: int = model.ENUM_CAP) -> Dist:
    """Exact law of g(X_1, ..., X_k) for X_i i.i.d. with law mu."""
    n = g.n_states
    if len(mu) != n:
        raise ValueError("distribution and map are over different spaces")
    if n**g.arity > cap:
        raise ArityOverflow(f"{n}^{g.arity} inputs exceed the cap {cap}")
    if g.arity == 0:
        return Dist.point(g.table[0], n)
    digits, out = _push_arrays(g)
    probs = mu.weights[digits].prod(axis=1)
    return Dist(np.bincount(out, weights=probs, minlength=n))


def _apply_T_weights(family: MapFamily, w: np.ndarray, cap: int) -> np.ndarray:
    n = family.space.size
    total = family.total_rate
    acc = np.zeros(n)
    for g, rate in family.entries:
        if n**g.arity > cap:
            raise ArityOverflow(f"{n}^{g.arity} inputs exceed the cap {cap}")
        if g.arity == 0:
            acc[g.table[0]] += rate
            continue
        digits, out = _push_arrays(g)
        probs = w[digits].prod(axis=1)
        acc += rate * np.bincount(out, weights=probs, minlength=n)
    return acc / total


def apply_T(family: MapFamily, mu: Dist, cap: int = model.ENUM_CAP) -> Dist:
    """Rate-weighted mixture of the exact per-map push-forwards."""
    if len(mu) != family.space.size:
        raise ValueError("distribution and family are over different spaces")
    return Dist(_apply_T_weights(family, mu.weights, cap))


def tv_distance(mu: Dist, nu: Dist) -> float:
    """Total variation distance (half the L1 distance of the weight vectors)."""
    if len(mu) != len(nu):
        raise ValueError("distributions live on different spaces")
    return 0.5 * float(np.abs(mu.weights - nu.weights).sum())


@dataclass(frozen=True)
class Trajectory:
    """ODE solution stored at every step: times[i] is the model time of dists[i]."""

    times: tuple[float, ...]
    dists: tuple[Dist, ...]

    def __post_init__(self) -> None:
        if not self.times or self.times[0] != 0.0:
            raise ValueError("trajectory must start at time 0")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("times must be strictly increasing")
        if len(self.times) != len(self.dists):
            raise ValueError("times and dists must have equal length")

    @property
    def final(self) -> Dist:
        return self.dists[-1]

    def to_csv(self) -> str:
        n = len(self.dists[0])
        header = "t," + ",".join(f"state_{i}" for i in range(n))
        rows = [header]
        for t, d in zip(self.times, self.dists):
            rows.append(f"{t:.17g}," + ",".join(f"{w:.17g}" for w in d.weights))
        return "\n".join(rows) + "\n"


def default_dt(family: MapFamily) -> float:
    return 1e-3 * min(1.0, 1.0 / family.total_rate)


def _rk4_weights(
    family: MapFamily, w0: np.ndarray, steps: int, dt: float, cap: int, record: bool
) -> list[np.ndarray]:
    """Core integrator on raw weight vectors; returns recorded states (incl. w0)."""
    total = family.total_rate
    out = [w0]
    w = w0

    def drift(v: np.ndarray) -> np.ndarray:
        if v.min() < -1e-6 or abs(v.sum() - 1.0) > 1e-6:
            raise StepTooLarge("intermediate state left the simplex; reduce dt")
        return total * (_apply_T_weights(family, v, cap) - v)

    for _ in range(steps):
        k1 = drift(w)
        k2 = drift(w + 0.5 * dt * k1)
        k3 = drift(w + 0.5 * dt * k2)
        k4 = drift(w + dt * k3)
        w = w + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        # round-off housekeeping: clip ~1e-17 negatives, renormalize
        w = np.clip(w, 0.0, None)
        w = w / w.sum()
        if record:
            out.append(w)
    if not record:
        out.append(w)
    return out


def solve_ode(
    family: MapFamily,
    mu0: Dist,
    t_end: float,
    dt: Optional[float] = None,
    cap: int = model.ENUM_CAP,
) -> Trajectory:
    """Integrate d mu/dt = total_rate * (T(mu) - mu) from mu0 up to t_end.

    Fixed-step RK4 with the state recorded at every step; the step count is
    rounded so the grid lands exactly on t_end.
    """
    if t_end < 0:
        raise ValueError("t_end must be >= 0")
    if dt is None:
        dt = default_dt(family)
    if dt <= 0:
        raise ValueError("dt must be > 0")
    if t_end == 0.0:
        return Trajectory((0.0,), (mu0,))
    steps = max(1, int(round(t_end / dt)))
    h = t_end / steps
    states = _rk4_weights(family, mu0.weights, steps, h, cap, record=True)
    times = tuple(i * h for i in range(steps + 1))
    return Trajectory(times, tuple(Dist(w) for w in states))


def coop_fixed_points(alpha: float) -> list[float]:
    """Rest points of dp/dt = alpha p^2 (1-p) - p on [0, 1].

    Always 0; for alpha >= 4 also 1/2 -+ sqrt(1/4 - 1/alpha) (coinciding at
    alpha = 4).
    """
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    if alpha < 4.0:
        return [0.0]
    root = math.sqrt(0.25 - 1.0 / alpha)
    if root == 0.0:
        return [0.0, 0.5]
    return [0.0, 0.5 - root, 0.5 + root]


@dataclass(frozen=True)
class FixedPointResult:
    dist: Dist
    converged: bool
    t_reached: float


def find_fixed_point(
    family: MapFamily,
    mu0: Dist,
    tol: float = 1e-10,
    t_max: float = 1e3,
    dt: Optional[float] = None,
) -> FixedPointResult:
    """Long-time limit of the ODE from mu0: integrate in unit-time blocks
    until successive block endpoints differ by less than tol in total
    variation.  Returns the best iterate with converged=False if t_max is hit.
    """
    if dt is None:
        dt = default_dt(family)
    steps_per_block = max(1, int(round(1.0 / dt)))
    h = 1.0 / steps_per_block
    w = mu0.weights
    t = 0.0
    while t < t_max:
        w_next = _rk4_weights(family, w, steps_per_block, h, model.ENUM_CAP, record=False)[-1]
        t += 1.0
        if 0.5 * np.abs(w_next - w).sum() < tol:
            return FixedPointResult(Dist(w_next), True, t)
        w = w_next
    return FixedPointResult(Dist(w), False, t)


@dataclass(frozen=True)
class ContractionCheck:
    holds: bool
    measured_ratio: float
    bound: float


def verify_contraction(
    family: MapFamily, mu: Dist, nu: Dist, t: float, dt: Optional[float] = None
) -> ContractionCheck:
    """Check ||mu_t - nu_t||_TV <= e^{Kt} ||mu_0 - nu_0||_TV on one pair.

    Returns the measured ratio ||mu_t - nu_t|| / ||mu_0 - nu_0|| (0 when the
    initial distance is 0) alongside the bound e^{Kt}.
    """
    K = constants(family).K
    bound = math.exp(K * t)
    d0 = tv_distance(mu, nu)
    mu_t = solve_ode(family, mu, t, dt).final
    nu_t = solve_ode(family, nu, t, dt).final
    dt_dist = tv_distance(mu_t, nu_t)
    if d0 == 0.0:
        return ContractionCheck(dt_dist <= 1e-12, 0.0, bound)
    ratio = dt_dist / d0
    return ContractionCheck(ratio <= bound * (1.0 + 1e-9) + 1e-12, ratio, bound)
