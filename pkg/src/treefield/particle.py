"""Finite interacting particle system on the complete graph.

Events arrive as a single Poisson stream of the family's total rate (in
unrescaled time); each event picks an entry proportionally to its rate,
draws that entry's lam pairwise-distinct sites uniformly (by rejection), and
rewrites the sampled tuple with the entry's vector map.  Empirical measures
are recorded at rescaled checkpoints (model time = unrescaled time / N),
which is the scale on which the empirical measure follows the mean-field ODE.

All randomness is keyed by (seed, event counter, draw slot), so runs are
deterministic per (family, N, seed) and independent of how events are
consumed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .model import Dist, StructuredFamily, encode
from .rng import derive, key_from_seed, u01

_PARTICLE_STREAM = 2
_INIT_STREAM = 3


@dataclass
class SystemState:
    """N-site configuration; model_time is unrescaled."""

    sites: list[int]
    model_time: float = 0.0

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    def empirical(self, n_states: int) -> Dist:
        return Dist(np.bincount(self.sites, minlength=n_states))


def bernoulli_init(N: int, p: float, seed: int) -> SystemState:
    """I.i.d. Bernoulli(p) sites, keyed by (seed, site index)."""
    base = derive(key_from_seed(seed), _INIT_STREAM)
    sites = [1 if u01(derive(base, i)) < p else 0 for i in range(N)]
    return SystemState(sites)


@dataclass(frozen=True)
class FlowEvent:
    """One graphical-representation event: entry, distinct site tuple, time.

    Events whose entry needs more sites than exist carry an empty tuple and
    change nothing (they still count toward the event budget).
    """

    entry_index: int
    sites: tuple[int, ...]
    time: float

    def __post_init__(self) -> None:
        if len(set(self.sites)) != len(self.sites):
            raise ValueError("event sites must be distinct")


def iter_events(
    structured: StructuredFamily, N: int, t_end: float, seed: int
) -> Iterator[FlowEvent]:
    """Poisson event stream up to unrescaled time t_end."""
    total = structured.total_rate
    cum = np.cumsum([e.rate for e in structured.entries]) / total
    base = derive(key_from_seed(seed), _PARTICLE_STREAM)
    t = 0.0
    counter = 0
    while True:
        ek = derive(base, counter)
        counter += 1
        t += -math.log(1.0 - u01(derive(ek, 0))) / total
        if t > t_end:
            return
        u = u01(derive(ek, 1))
        idx = int(np.searchsorted(cum, u, side="right"))
        idx = min(idx, len(structured.entries) - 1)
        lam = structured.entries[idx].lam
        if lam > N:
            yield FlowEvent(idx, (), t)
            continue
        sites: list[int] = []
        attempt = 0
        while len(sites) < lam:
            s = int(u01(derive(ek, 2 + attempt)) * N)
            attempt += 1
            if s not in sites:
                sites.append(s)
        yield FlowEvent(idx, tuple(sites), t)


def apply_event(structured: StructuredFamily, sites: list[int], ev: FlowEvent) -> None:
    """Rewrite the event's site tuple in place with the entry's vector map."""
    if not ev.sites:
        return
    entry = structured.entries[ev.entry_index]
    n = structured.space.size
    idx = encode([sites[i] for i in ev.sites], n)
    for j, site in enumerate(ev.sites):
        sites[site] = entry.components[j].table[idx]


@dataclass(frozen=True)
class RunRecord:
    """Per-checkpoint snapshots of one run (checkpoints are in rescaled time)."""

    checkpoints: tuple[float, ...]
    dists: tuple[Dist, ...]
    lam_sums: tuple[float, ...]  # cumulative sum of event lam up to each checkpoint
    events_total: int

    def p_values(self) -> list[float]:
        return [d[1] for d in self.dists]

    def to_csv(self) -> str:
        if len(self.dists[0]) == 2:
            rows = ["t_rescaled,p"]
            for t, d in zip(self.checkpoints, self.dists):
                rows.append(f"{t:.17g},{d[1]:.17g}")
        else:
            n = len(self.dists[0])
            rows = ["t_rescaled," + ",".join(f"state_{i}" for i in range(n))]
            for t, d in zip(self.checkpoints, self.dists):
                rows.append(f"{t:.17g}," + ",".join(f"{w:.17g}" for w in d.weights))
        return "\n".join(rows) + "\n"


def manifest_json(structured: StructuredFamily, N: int, seed: int, record: RunRecord) -> str:
    return json.dumps(
        {
            "N": N,
            "seed": seed,
            "rates": [e.rate for e in structured.entries],
            "events": record.events_total,
            "checkpoints": list(record.checkpoints),
        },
        indent=2,
    )


def apply_events(
    structured: StructuredFamily,
    init: SystemState,
    events: Iterable[FlowEvent],
    t_rescaled: float,
    checkpoints: Sequence[float],
) -> RunRecord:
    """Drive a copy of `init` through an event stream, recording checkpoints."""
    N = init.n_sites
    n_states = structured.space.size
    sites = list(init.sites)
    counts = [0] * n_states
    for s in sites:
        counts[s] += 1
    cps = sorted(checkpoints)
    if any(c < 0 or c > t_rescaled for c in cps):
        raise ValueError("checkpoints must lie in [0, t_rescaled]")
    out_dists: list[Dist] = []
    out_lams: list[float] = []
    cp_i = 0
    lam_sum = 0.0
    n_events = 0

    def flush(up_to: float) -> None:
        # record every checkpoint strictly before the next event time
        nonlocal cp_i
        while cp_i < len(cps) and cps[cp_i] * N < up_to:
            out_dists.append(Dist(list(counts)))
            out_lams.append(lam_sum)
            cp_i += 1

    for ev in events:
        flush(ev.time)
        n_events += 1
        lam_sum += structured.entries[ev.entry_index].lam
        if ev.sites:
            entry = structured.entries[ev.entry_index]
            idx = encode([sites[i] for i in ev.sites], n_states)
            for j, site in enumerate(ev.sites):
                new = entry.components[j].table[idx]
                counts[sites[site]] -= 1
                counts[new] += 1
                sites[site] = new
    flush(t_rescaled * N * (1.0 + 1e-12) + 1e-12)
    return RunRecord(tuple(cps), tuple(out_dists), tuple(out_lams), n_events)


def run(
    structured: StructuredFamily,
    init: SystemState,
    t_rescaled: float,
    seed: int,
    checkpoints: Sequence[float],
) -> RunRecord:
    """One particle-system run to rescaled time t_rescaled."""
    events = iter_events(structured, init.n_sites, t_rescaled * init.n_sites, seed)
    return apply_events(structured, init, events, t_rescaled, checkpoints)


@dataclass
class CoupledStates:
    """n replicas sharing one event stream (same N, same family)."""

    replicas: list[SystemState]

    def __post_init__(self) -> None:
        if not self.replicas:
            raise ValueError("need at least one replica")
        N = self.replicas[0].n_sites
        if any(r.n_sites != N for r in self.replicas):
            raise ValueError("replicas must have equal size")

    @property
    def n_sites(self) -> int:
        return self.replicas[0].n_sites


@dataclass(frozen=True)
class CoupledRecord:
    """Per-checkpoint empirical law of the replica tuple over sites."""

    checkpoints: tuple[float, ...]
    joint_dists: tuple[Dist, ...]  # over {0..n_S-1}^n in big-endian encoding
    n_replicas: int

    def pr_values(self) -> list[tuple[float, float]]:
        """(p, r) per checkpoint for two binary replicas: p = mass of first
        replica at 1, r = mass of 'either replica at 1'."""
        if self.n_replicas != 2:
            raise ValueError("(p, r) is defined for two replicas")
        out = []
        for d in self.joint_dists:
            if len(d) != 4:
                raise ValueError("(p, r) is defined for binary states")
            out.append((d[2] + d[3], d[1] + d[2] + d[3]))
        return out

    def to_csv(self) -> str:
        rows = ["t_rescaled,p,r"]
        for t, (p, r) in zip(self.checkpoints, self.pr_values()):
            rows.append(f"{t:.17g},{p:.17g},{r:.17g}")
        return "\n".join(rows) + "\n"


def run_coupled(
    structured: StructuredFamily,
    inits: CoupledStates,
    t_rescaled: float,
    seed: int,
    checkpoints: Sequence[float],
) -> CoupledRecord:
    """Coupled replicas: every event applies the same map to the same sites
    in each replica; records the site-averaged law of the replica tuple."""
    n_rep = len(inits.replicas)
    N = inits.n_sites
    n_states = structured.space.size
    reps = [list(r.sites) for r in inits.replicas]
    n_joint = n_states**n_rep
    counts = [0] * n_joint
    for i in range(N):
        counts[encode([rep[i] for rep in reps], n_states)] += 1
    cps = sorted(checkpoints)
    out: list[Dist] = []
    cp_i = 0

    def flush(up_to: float) -> None:
        nonlocal cp_i
        while cp_i < len(cps) and cps[cp_i] * N < up_to:
            out.append(Dist(list(counts)))
            cp_i += 1

    for ev in iter_events(structured, N, t_rescaled * N, seed):
        flush(ev.time)
        if not ev.sites:
            continue
        entry = structured.entries[ev.entry_index]
        for rep in reps:
            idx = encode([rep[i] for i in ev.sites], n_states)
            new_vals = [entry.components[j].table[idx] for j in range(entry.lam)]
            for j, site in enumerate(ev.sites):
                counts[encode([r[site] for r in reps], n_states)] -= 1
                rep[site] = new_vals[j]
                counts[encode([r[site] for r in reps], n_states)] += 1
    flush(t_rescaled * N * (1.0 + 1e-12) + 1e-12)
    return CoupledRecord(tuple(cps), tuple(out), n_rep)


@dataclass(frozen=True)
class SweepRow:
    N: int
    mean_max_error: float


@dataclass(frozen=True)
class SweepTable:
    rows: tuple[SweepRow, ...]
    monotone_ok: bool  # errors decrease with N, allowing one inversion


def convergence_sweep(
    structured: StructuredFamily,
    p0: float,
    N_list: Sequence[int],
    t_rescaled: float,
    seeds: Sequence[int],
    checkpoints: Sequence[float],
    oracle_p: Sequence[float],
) -> SweepTable:
    """Max checkpoint error of the empirical one-mass vs the ODE oracle,
    averaged over seeds, for increasing N."""
    if any(b <= a for a, b in zip(N_list, list(N_list)[1:])):
        raise ValueError("N_list must be increasing")
    rows = []
    for N in N_list:
        errs = []
        for seed in seeds:
            init = bernoulli_init(N, p0, seed)
            rec = run(structured, init, t_rescaled, seed, checkpoints)
            errs.append(max(abs(p - q) for p, q in zip(rec.p_values(), oracle_p)))
        rows.append(SweepRow(N, float(np.mean(errs))))
    inversions = sum(
        1 for a, b in zip(rows, rows[1:]) if b.mean_max_error >= a.mean_max_error
    )
    return SweepTable(tuple(rows), inversions <= 1)
