"""Finite state spaces, local maps, rate-weighted map families, and presets.

A model is a finite list of (local map, rate) pairs over a finite state
space.  Maps are stored as dense lookup tables indexed by the big-endian
mixed-radix encoding of their argument tuple, so applying a map inside a
Monte Carlo loop is a single table lookup.  The structured (vector-valued)
form used by the finite particle system keeps per-event component maps with
their dependency sets; `flatten` reduces it to the plain form used by every
other module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import EmptyFamily, NegativeRate

ENUM_CAP = 10**7  # default cap on exact enumerations (n_states ** arity)

BUILTIN_NAMES = ("cob", "dth", "bth", "bra", "identity")


def encode(states: Sequence[int], n_states: int) -> int:
    """Big-endian mixed-radix index of a state tuple (first coord most significant)."""
    idx = 0
    for s in states:
        idx = idx * n_states + s
    return idx


def decode(idx: int, n_states: int, arity: int) -> tuple[int, ...]:
    out = [0] * arity
    for j in range(arity - 1, -1, -1):
        out[j] = idx % n_states
        idx //= n_states
    return tuple(out)


@dataclass(frozen=True)
class StateSpace:
    """Finite state space {0, ..., size-1} with an optional partial order.

    The order, when given, is a set of (a, b) pairs meaning a <= b.  It must
    be reflexive, antisymmetric, and transitive; monotone operations
    additionally require 0 to be the minimal and size-1 the maximal element.
    """

    size: int
    partial_order: Optional[frozenset[tuple[int, int]]] = None

    def __post_init__(self) -> None:
        if self.size < 1:
            raise ValueError("state space needs at least one state")
        po = self.partial_order
        if po is None:
            return
        n = self.size
        for a, b in po:
            if not (0 <= a < n and 0 <= b < n):
                raise ValueError(f"order pair {(a, b)} outside 0..{n - 1}")
        for a in range(n):
            if (a, a) not in po:
                raise ValueError("order is not reflexive")
        for a, b in po:
            if a != b and (b, a) in po:
                raise ValueError("order is not antisymmetric")
        for a, b in po:
            for c in range(n):
                if (b, c) in po and (a, c) not in po:
                    raise ValueError("order is not transitive")

    @classmethod
    def totally_ordered(cls, size: int) -> "StateSpace":
        order = frozenset((a, b) for a in range(size) for b in range(size) if a <= b)
        return cls(size, order)

    def leq(self, a: int, b: int) -> bool:
        if self.partial_order is None:
            raise ValueError("state space has no declared order")
        return (a, b) in self.partial_order

    def has_extremes(self) -> bool:
        """True when 0 is minimal and size-1 maximal under the declared order."""
        if self.partial_order is None:
            return False
        return all(
            self.leq(0, x) and self.leq(x, self.size - 1) for x in range(self.size)
        )


BINARY = StateSpace.totally_ordered(2)


@dataclass(frozen=True)
class LocalMap:
    """Total function from S^arity to S as a dense lookup table.

    `table[encode(x)] = g(x)`.  Arity-0 maps have a single output value (the
    image of the empty argument tuple).
    """

    name: str
    arity: int
    n_states: int
    table: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.arity < 0:
            raise ValueError("arity must be >= 0")
        if len(self.table) != self.n_states**self.arity:
            raise ValueError(
                f"map {self.name}: table has {len(self.table)} entries, "
                f"expected {self.n_states ** self.arity}"
            )
        if any(not (0 <= v < self.n_states) for v in self.table):
            raise ValueError(f"map {self.name}: table value out of range")

    def apply(self, args: Sequence[int]) -> int:
        return self.table[encode(args, self.n_states)]

    def is_identity(self) -> bool:
        return self.arity == 1 and self.table == tuple(range(self.n_states))

    def is_monotone(self, space: StateSpace) -> bool:
        """Full enumeration check of g(x) <= g(y) whenever x <= y coordinatewise."""
        if space.partial_order is None:
            raise ValueError("monotonicity needs a declared order")
        n, k = self.n_states, self.arity
        inputs = [decode(i, n, k) for i in range(n**k)]
        for i, x in enumerate(inputs):
            for j, y in enumerate(inputs):
                if all(space.leq(a, b) for a, b in zip(x, y)):
                    if not space.leq(self.table[i], self.table[j]):
                        return False
        return True


def _table_from_fn(fn, arity: int, n_states: int) -> tuple[int, ...]:
    return tuple(fn(*decode(i, n_states, arity)) for i in range(n_states**arity))


@lru_cache(maxsize=None)
def builtin_map(name: str) -> LocalMap:
    """The named standard map on {0,1}: cob, dth, bth, bra, or identity."""
    if name == "cob":
        return LocalMap("cob", 3, 2, _table_from_fn(lambda a, b, c: a | (b & c), 3, 2))
    if name == "dth":
        return LocalMap("dth", 0, 2, (0,))
    if name == "bth":
        return LocalMap("bth", 0, 2, (1,))
    if name == "bra":
        return LocalMap("bra", 2, 2, _table_from_fn(lambda a, b: a | b, 2, 2))
    if name == "identity":
        return LocalMap("identity", 1, 2, (0, 1))
    raise ValueError(f"unknown builtin map {name!r}")


@dataclass(frozen=True)
class MapFamily:
    """Rate-weighted list of local maps over one state space.

    Zero-rate entries are pruned at construction; they contribute nothing to
    any equation.  Immutable and safely shareable across threads.
    """

    space: StateSpace
    entries: tuple[tuple[LocalMap, float], ...]

    def __post_init__(self) -> None:
        kept = []
        for g, rate in self.entries:
            if rate < 0:
                raise NegativeRate(f"rate {rate} for map {g.name}")
            if g.n_states != self.space.size:
                raise ValueError(f"map {g.name} is over {g.n_states} states")
            if rate > 0:
                kept.append((g, float(rate)))
        if not kept:
            raise EmptyFamily("family has no entries with positive rate")
        object.__setattr__(self, "entries", tuple(kept))

    @property
    def total_rate(self) -> float:
        return sum(rate for _, rate in self.entries)

    @property
    def mean_arity(self) -> float:
        return sum(rate * g.arity for g, rate in self.entries) / self.total_rate

    @property
    def max_arity(self) -> int:
        return max(g.arity for g, _ in self.entries)

    def is_monotone(self) -> bool:
        return self.space.has_extremes() and all(
            g.is_monotone(self.space) for g, _ in self.entries
        )

    def map_named(self, name: str) -> LocalMap:
        for g, _ in self.entries:
            if g.name == name:
                return g
        raise KeyError(name)


@dataclass(frozen=True)
class FamilyConstants:
    """Branching constants of a family: K = sum rate*(arity-1), L = sum rate*(arity+1)."""

    K: float
    L: float
    subcritical: bool


def constants(family: MapFamily) -> FamilyConstants:
    """Growth constant, activity constant, and whether the genealogy dies out.

    The genealogy of a single site is almost surely finite when K < 0, or
    when K = 0 while some positive-rate map has arity != 1.
    """
    K = sum(rate * (g.arity - 1) for g, rate in family.entries)
    L = sum(rate * (g.arity + 1) for g, rate in family.entries)
    sub = K < 0 or (K == 0 and any(g.arity != 1 for g, _ in family.entries))
    return FamilyConstants(K, L, sub)


@dataclass(frozen=True)
class StructuredEntry:
    """One event type of the structured form: a vector map on lam coordinates.

    Component i (0-based) rewrites coordinate i as a function of the
    coordinates in its dependency set K[i]; the entry fires at `rate` and the
    whole vector map is applied at once.
    """

    rate: float
    lam: int
    components: tuple[LocalMap, ...]
    depends: tuple[tuple[int, ...], ...]  # sorted 0-based coordinate sets

    def __post_init__(self) -> None:
        if self.rate < 0:
            raise NegativeRate(f"rate {self.rate}")
        if self.lam < 1:
            raise ValueError("lam must be >= 1")
        if len(self.components) != self.lam or len(self.depends) != self.lam:
            raise ValueError("need exactly lam components and dependency sets")
        for i, (g, K) in enumerate(zip(self.components, self.depends)):
            if g.arity != self.lam:
                raise ValueError(f"component {i} must take all {self.lam} coordinates")
            if tuple(sorted(set(K))) != K:
                raise ValueError(f"dependency set {K} must be sorted and duplicate-free")
            if any(not (0 <= j < self.lam) for j in K):
                raise ValueError(f"dependency set {K} out of range")
            self._check_depends_only(g, K)

    def _check_depends_only(self, g: LocalMap, K: tuple[int, ...]) -> None:
        # enumerate all inputs; the value may not change when a non-K coordinate does
        n, lam = g.n_states, self.lam
        free = [j for j in range(lam) if j not in K]
        if not free:
            return
        for idx in range(n**lam):
            x = list(decode(idx, n, lam))
            v = g.table[idx]
            for j in free:
                for alt in range(n):
                    y = list(x)
                    y[j] = alt
                    if g.table[encode(y, n)] != v:
                        raise ValueError(
                            f"component {g.name} depends on coordinate {j} "
                            f"outside its declared set {K}"
                        )


@dataclass(frozen=True)
class StructuredFamily:
    """Vector-valued family driving the finite particle system."""

    space: StateSpace
    entries: tuple[StructuredEntry, ...]

    def __post_init__(self) -> None:
        kept = tuple(e for e in self.entries if e.rate > 0)
        if not kept:
            raise EmptyFamily("structured family has no positive-rate entries")
        for e in kept:
            for g in e.components:
                if g.n_states != self.space.size:
                    raise ValueError("component over wrong state space")
        object.__setattr__(self, "entries", kept)

    @property
    def total_rate(self) -> float:
        return sum(e.rate for e in self.entries)

    @property
    def max_lam(self) -> int:
        return max(e.lam for e in self.entries)


def _restrict(g: LocalMap, K: tuple[int, ...], lam: int) -> LocalMap:
    """Map on the K coordinates only (K ascending), values from the full table."""
    n = g.n_states
    k = len(K)

    def fn(*args: int) -> int:
        full = [0] * lam
        for pos, coord in enumerate(K):
            full[coord] = args[pos]
        return g.table[encode(full, n)]

    return LocalMap(g.name, k, n, _table_from_fn(fn, k, n))


def flatten(structured: StructuredFamily, keep_identity: bool = False) -> MapFamily:
    """Reduce the structured form to one (map, rate) entry per component.

    Each (event, component i) pair becomes an entry with the event's rate and
    the component map restricted to its dependency set (coordinates taken in
    increasing order).  Identity components change nothing in the one-site
    law and are dropped unless `keep_identity` is set.
    """
    out: list[tuple[LocalMap, float]] = []
    for e in structured.entries:
        for i in range(e.lam):
            g = _restrict(e.components[i], e.depends[i], e.lam)
            if not keep_identity and e.depends[i] == (i,) and g.is_identity():
                continue
            out.append((g, e.rate))
    if not out:
        raise EmptyFamily("all components are identities")
    return MapFamily(structured.space, tuple(out))


def preset(name: str, *params: float) -> MapFamily:
    """Named model family over {0,1}.

    coop(alpha): cooperative branching at rate alpha, deaths at rate 1.
    coop_birth(alpha, beta): coop plus spontaneous births at rate beta.
    moran(gamma, s, u, nu0, nu1): frequency-dependent selection gamma,
        selection s, mutation u with target probabilities nu0 + nu1 = 1.
    """
    if name == "coop":
        (alpha,) = params
        entries = [(builtin_map("cob"), alpha), (builtin_map("dth"), 1.0)]
    elif name == "coop_birth":
        alpha, beta = params
        entries = [
            (builtin_map("cob"), alpha),
            (builtin_map("dth"), 1.0),
            (builtin_map("bth"), beta),
        ]
    elif name == "moran":
        gamma, s, u, nu0, nu1 = params
        if abs(nu0 + nu1 - 1.0) > 1e-12:
            raise ValueError("mutation probabilities must sum to 1")
        if nu0 < 0 or nu1 < 0:
            raise NegativeRate("mutation probabilities must be >= 0")
        entries = [
            (builtin_map("cob"), gamma),
            (builtin_map("bra"), s),
            (builtin_map("dth"), u * nu0),
            (builtin_map("bth"), u * nu1),
        ]
    else:
        raise ValueError(f"unknown preset {name!r}")
    return MapFamily(BINARY, tuple(entries))


def _proj(i: int, lam: int) -> LocalMap:
    return LocalMap("identity", lam, 2, _table_from_fn(lambda *x: x[i], lam, 2))


def _const_vec(value: int, lam: int) -> LocalMap:
    name = "bth" if value == 1 else "dth"
    return LocalMap(name, lam, 2, tuple([value] * (2**lam)))


def _cob_vec() -> LocalMap:
    return LocalMap("cob", 3, 2, _table_from_fn(lambda a, b, c: a | (b & c), 3, 2))


def _bra_vec() -> LocalMap:
    return LocalMap("bra", 2, 2, _table_from_fn(lambda a, b: a | b, 2, 2))


def structured_preset(name: str, *params: float) -> StructuredFamily:
    """Structured (vector) form of the presets, for the particle system.

    coop: rate alpha rewrites site 1 of a sampled triple to x1 | (x2 & x3)
    and leaves sites 2, 3 unchanged; rate 1 kills a single site.
    """
    space = BINARY
    if name == "coop":
        (alpha,) = params
        entries = (
            StructuredEntry(
                alpha, 3, (_cob_vec(), _proj(1, 3), _proj(2, 3)), ((0, 1, 2), (1,), (2,))
            ),
            StructuredEntry(1.0, 1, (_const_vec(0, 1),), ((),)),
        )
    elif name == "coop_birth":
        alpha, beta = params
        entries = (
            StructuredEntry(
                alpha, 3, (_cob_vec(), _proj(1, 3), _proj(2, 3)), ((0, 1, 2), (1,), (2,))
            ),
            StructuredEntry(1.0, 1, (_const_vec(0, 1),), ((),)),
            StructuredEntry(beta, 1, (_const_vec(1, 1),), ((),)),
        )
    elif name == "moran":
        gamma, s, u, nu0, nu1 = params
        if abs(nu0 + nu1 - 1.0) > 1e-12:
            raise ValueError("mutation probabilities must sum to 1")
        entries = (
            StructuredEntry(
                gamma, 3, (_cob_vec(), _proj(1, 3), _proj(2, 3)), ((0, 1, 2), (1,), (2,))
            ),
            StructuredEntry(s, 2, (_bra_vec(), _proj(1, 2)), ((0, 1), (1,))),
            StructuredEntry(u * nu0, 1, (_const_vec(0, 1),), ((),)),
            StructuredEntry(u * nu1, 1, (_const_vec(1, 1),), ((),)),
        )
    else:
        raise ValueError(f"unknown preset {name!r}")
    return StructuredFamily(space, entries)


def as_structured(family: MapFamily) -> StructuredFamily:
    """Canonical structured wrapper of a flat family: entry (g, rate) becomes
    a vector map on max(arity, 1) coordinates whose first component is g and
    whose remaining components are identities."""
    entries = []
    for g, rate in family.entries:
        lam = max(g.arity, 1)
        n = g.n_states
        if g.arity == 0:
            comps = (LocalMap(g.name, 1, n, tuple([g.table[0]] * n)),)
            deps: tuple[tuple[int, ...], ...] = ((),)
        else:
            first = LocalMap(
                g.name, lam, n,
                _table_from_fn(lambda *x: g.table[encode(x[: g.arity], n)], lam, n),
            )
            comps_list = [first]
            deps_list: list[tuple[int, ...]] = [tuple(range(g.arity))]
            for i in range(1, lam):
                comps_list.append(
                    LocalMap("identity", lam, n, _table_from_fn(lambda *x, i=i: x[i], lam, n))
                )
                deps_list.append((i,))
            comps = tuple(comps_list)
            deps = tuple(deps_list)
        entries.append(StructuredEntry(rate, lam, comps, deps))
    return StructuredFamily(family.space, tuple(entries))


class Dist:
    """Probability vector on a finite state space.

    Nonnegative weights are normalized at construction; entries more negative
    than -1e-12 are rejected, smaller round-off negatives are clipped.
    """

    __slots__ = ("weights",)

    def __init__(self, weights: Iterable[float]):
        w = np.asarray(list(weights) if not isinstance(weights, np.ndarray) else weights,
                       dtype=float)
        if w.ndim != 1 or w.size < 1:
            raise ValueError("weights must be a nonempty vector")
        if w.min() < -1e-12:
            raise ValueError(f"negative weight {w.min()}")
        w = np.clip(w, 0.0, None)
        total = w.sum()
        if total <= 0.0:
            raise ValueError("weights sum to zero")
        w = w / total
        w.setflags(write=False)
        self.weights = w

    @classmethod
    def point(cls, state: int, n_states: int) -> "Dist":
        w = np.zeros(n_states)
        w[state] = 1.0
        return cls(w)

    @classmethod
    def bernoulli(cls, p: float) -> "Dist":
        if not 0.0 <= p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        return cls((1.0 - p, p))

    def __len__(self) -> int:
        return int(self.weights.size)

    def __getitem__(self, state: int) -> float:
        return float(self.weights[state])

    def __repr__(self) -> str:
        return f"Dist({np.array2string(self.weights, precision=6)})"

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.weights)


# --- text config format -----------------------------------------------------
#
#   states = 2
#   map.cob = builtin
#   map.foo = table 1 :: 1 0
#   entry = cob 4.5
#
# Builtin maps may be declared (for round-trips) or just referenced by name.


def family_to_config(family: MapFamily) -> str:
    lines = [f"states = {family.space.size}"]
    seen: dict[str, LocalMap] = {}
    for g, _ in family.entries:
        if g.name in seen:
            if seen[g.name] != g:
                raise ValueError(f"two different maps share the name {g.name!r}")
            continue
        seen[g.name] = g
        if g.name in BUILTIN_NAMES and family.space.size == 2 and g == builtin_map(g.name):
            lines.append(f"map.{g.name} = builtin")
        else:
            vals = " ".join(str(v) for v in g.table)
            lines.append(f"map.{g.name} = table {g.arity} :: {vals}")
    for g, rate in family.entries:
        lines.append(f"entry = {g.name} {rate:.17g}")
    return "\n".join(lines) + "\n"


def family_from_config(text: str) -> MapFamily:
    size = None
    maps: dict[str, LocalMap] = {}
    entries: list[tuple[str, float]] = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"bad config line: {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key == "states":
            size = int(value)
        elif key.startswith("map."):
            name = key[4:]
            if value == "builtin":
                maps[name] = builtin_map(name)
            else:
                head, _, vals = value.partition("::")
                tokens = head.split()
                if len(tokens) != 2 or tokens[0] != "table":
                    raise ValueError(f"bad map spec: {raw!r}")
                arity = int(tokens[1])
                table = tuple(int(v) for v in vals.split())
                if size is None:
                    raise ValueError("states must come before map tables")
                maps[name] = LocalMap(name, arity, size, table)
        elif key == "entry":
            name, rate = value.split()
            entries.append((name, float(rate)))
        else:
            raise ValueError(f"unknown config key {key!r}")
    if size is None:
        raise ValueError("config missing 'states'")
    space = StateSpace.totally_ordered(size) if size == 2 else StateSpace(size)
    built = []
    for name, rate in entries:
        if name in maps:
            g = maps[name]
        elif name in BUILTIN_NAMES and size == 2:
            g = builtin_map(name)
        else:
            raise ValueError(f"entry references unknown map {name!r}")
        built.append((g, rate))
    return MapFamily(space, tuple(built))
