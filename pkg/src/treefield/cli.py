"""Command-line front end: one binary, one experiment per subcommand.

Every run is fully determined by its flags plus a single 64-bit seed (the
default seed is a fixed constant, never the clock).  `--dump-config` writes a
key=value file that reproduces the run; `--config` reads one back, with
explicit flags taking precedence.  Numbers are written with 17 significant
digits so doubles round-trip losslessly.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import higher, meanfield, particle, trees, variate
from .errors import TreefieldError
from .model import (Dist, MapFamily, StructuredFamily, family_from_config,
                    preset, structured_preset)

DEFAULT_SEED = 20177

# (name, type, default); default=None means required
_FAMILY_PARAMS = [
    ("preset", str, "coop"),
    ("alpha", float, 4.5),
    ("beta", float, 0.0),
    ("gamma", float, 0.0),
    ("sel", float, 0.0),
    ("mut", float, 0.0),
    ("nu0", float, 1.0),
    ("nu1", float, 0.0),
    ("family_config", str, ""),
]

_COMMANDS: dict[str, list[tuple[str, type, object]]] = {
    "meanfield": _FAMILY_PARAMS + [
        ("p0", float, None), ("t", float, None), ("dt", float, 0.0),
        ("seed", int, DEFAULT_SEED), ("out", str, ""),
    ],
    "bivariate": [
        ("alpha", float, None), ("p0", float, None), ("r0", float, None),
        ("t", float, None), ("dt", float, 1e-3),
        ("seed", int, DEFAULT_SEED), ("out", str, ""),
    ],
    "tree-estimate": _FAMILY_PARAMS + [
        ("p0", float, None), ("t", float, None), ("samples", int, 100000),
        ("seed", int, DEFAULT_SEED), ("out", str, ""),
    ],
    "uniqueness-scan": _FAMILY_PARAMS + [
        ("t_grid", str, "1,2,4,8"), ("samples", int, 10000),
        ("seed", int, DEFAULT_SEED), ("out", str, ""),
    ],
    "hlrde": [
        ("alpha", float, None), ("pool", int, 200000), ("sweeps", int, 300),
        ("seed", int, DEFAULT_SEED), ("out", str, ""), ("stats_out", str, ""),
    ],
    "particle": _FAMILY_PARAMS + [
        ("N", int, None), ("p0", float, None), ("t", float, None),
        ("checkpoints", str, ""), ("seed", int, DEFAULT_SEED),
        ("out", str, ""), ("manifest_out", str, ""),
    ],
    "coupled": _FAMILY_PARAMS + [
        ("N", int, None), ("p0", float, None), ("t", float, None),
        ("checkpoints", str, ""), ("seed", int, DEFAULT_SEED), ("out", str, ""),
    ],
    "duality": _FAMILY_PARAMS + [
        ("t_grid", str, "0.5,1,1.5,2"), ("samples", int, 10000),
        ("seed", int, DEFAULT_SEED), ("out", str, ""),
    ],
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="treefield",
        description="Mean-field and tree Monte Carlo experiments for map-driven models",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd, params in _COMMANDS.items():
        p = sub.add_parser(cmd)
        p.add_argument("--config", type=str, default="")
        p.add_argument("--dump-config", type=str, default="", dest="dump_config")
        for name, typ, _default in params:
            p.add_argument(f"--{name.replace('_', '-')}", type=typ, default=None,
                           dest=name)
    return parser


def _resolve(args: argparse.Namespace) -> dict:
    """Merge CLI > config file > defaults; missing required values exit 2."""
    params = _COMMANDS[args.command]
    from_file: dict[str, str] = {}
    if args.config:
        for raw in Path(args.config).read_text().splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise SystemExit(f"bad config line: {raw!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            from_file[key] = value
        if from_file.get("command", args.command) != args.command:
            print(f"config is for command {from_file['command']!r}", file=sys.stderr)
            raise SystemExit(2)
    resolved = {}
    for name, typ, default in params:
        value = getattr(args, name)
        if value is None and name in from_file:
            value = typ(from_file[name])
        if value is None:
            value = default
        if value is None:
            print(f"missing required flag --{name.replace('_', '-')}", file=sys.stderr)
            raise SystemExit(2)
        resolved[name] = value
    return resolved


def _dump_config(command: str, resolved: dict, path: str) -> None:
    lines = [f"command = {command}"]
    for name, value in resolved.items():
        if isinstance(value, float):
            lines.append(f"{name} = {value:.17g}")
        else:
            lines.append(f"{name} = {value}")
    Path(path).write_text("\n".join(lines) + "\n")


def _family(cfg: dict) -> MapFamily:
    if cfg.get("family_config"):
        return family_from_config(Path(cfg["family_config"]).read_text())
    name = cfg["preset"]
    if name == "coop":
        return preset("coop", cfg["alpha"])
    if name == "coop_birth":
        return preset("coop_birth", cfg["alpha"], cfg["beta"])
    if name == "moran":
        return preset("moran", cfg["gamma"], cfg["sel"], cfg["mut"], cfg["nu0"], cfg["nu1"])
    print(f"unknown value for --preset: {name!r}", file=sys.stderr)
    raise SystemExit(2)


def _structured(cfg: dict) -> StructuredFamily:
    if cfg.get("family_config"):
        from .model import as_structured

        return as_structured(family_from_config(Path(cfg["family_config"]).read_text()))
    name = cfg["preset"]
    if name == "coop":
        return structured_preset("coop", cfg["alpha"])
    if name == "coop_birth":
        return structured_preset("coop_birth", cfg["alpha"], cfg["beta"])
    if name == "moran":
        return structured_preset(
            "moran", cfg["gamma"], cfg["sel"], cfg["mut"], cfg["nu0"], cfg["nu1"]
        )
    print(f"unknown value for --preset: {name!r}", file=sys.stderr)
    raise SystemExit(2)


def _write(path: str, text: str) -> None:
    if path:
        Path(path).write_text(text)


def _floats(csv: str) -> list[float]:
    return [float(x) for x in csv.split(",") if x.strip()]


def _cmd_meanfield(cfg: dict) -> str:
    family = _family(cfg)
    dt = cfg["dt"] if cfg["dt"] > 0 else None
    traj = meanfield.solve_ode(family, Dist.bernoulli(cfg["p0"]), cfg["t"], dt)
    _write(cfg["out"], traj.to_csv())
    return f"p_final={traj.final[1]:.17g} t={cfg['t']:.17g}"


def _cmd_bivariate(cfg: dict) -> str:
    start = variate.PRPoint(cfg["p0"], cfg["r0"])
    path = variate.bivariate_ode(cfg["alpha"], start, cfg["t"], cfg["dt"])
    _write(cfg["out"], variate.pr_to_csv(path))
    _, end = path[-1]
    return f"p={end.p:.6f} r={end.r:.6f} t={cfg['t']:.17g}"


def _cmd_tree_estimate(cfg: dict) -> str:
    family = _family(cfg)
    est = trees.mc_estimate_Tt(
        family, Dist.bernoulli(cfg["p0"]), cfg["t"], cfg["samples"], cfg["seed"]
    )
    _write(cfg["out"], est.to_csv())
    return f"P[1]={est.dist[1]:.6f}±{est.stderr[1]:.6f} n={cfg['samples']}"


def _cmd_uniqueness_scan(cfg: dict) -> str:
    family = _family(cfg)
    grid = _floats(cfg["t_grid"])
    fractions = trees.uniqueness_scan(family, grid, cfg["samples"], cfg["seed"])
    rows = ["t,fraction_constant"]
    for t, f in zip(grid, fractions):
        rows.append(f"{t:.17g},{f:.17g}")
    _write(cfg["out"], "\n".join(rows) + "\n")
    return f"fraction_constant(t={grid[-1]:g})={fractions[-1]:.4f}"


def _cmd_hlrde(cfg: dict) -> str:
    sol = higher.solve_hl_rde(cfg["alpha"], cfg["pool"], cfg["sweeps"], cfg["seed"])
    stats = higher.pool_stats(sol.pool)
    _write(cfg["out"], higher.cdf_to_csv(stats))
    _write(cfg["stats_out"], higher.stats_json(cfg["alpha"], sol.pool, sol.sweeps, stats))
    M = sol.pool.size
    v = sol.pool.values
    se_mean = float(v.std() / np.sqrt(M))
    se_m2 = float((v * v).std() / np.sqrt(M))
    se_a0 = float(np.sqrt(stats.atom0 * (1 - stats.atom0) / M))
    line = (
        f"mean={stats.mean:.3f}±{se_mean:.3f}, m2={stats.m2:.3f}±{se_m2:.3f}, "
        f"atom0={stats.atom0:.3f}±{se_a0:.3f}"
    )
    if not sol.converged:
        from .errors import NotConverged

        raise NotConverged(line)
    return line


def _cmd_particle(cfg: dict) -> str:
    structured = _structured(cfg)
    cps = _floats(cfg["checkpoints"]) or [cfg["t"]]
    init = particle.bernoulli_init(cfg["N"], cfg["p0"], cfg["seed"])
    rec = particle.run(structured, init, cfg["t"], cfg["seed"], cps)
    _write(cfg["out"], rec.to_csv())
    _write(cfg["manifest_out"], particle.manifest_json(structured, cfg["N"], cfg["seed"], rec))
    return f"p_hat={rec.p_values()[-1]:.6f} events={rec.events_total}"


def _cmd_coupled(cfg: dict) -> str:
    structured = _structured(cfg)
    cps = _floats(cfg["checkpoints"]) or [cfg["t"]]
    a = particle.bernoulli_init(cfg["N"], cfg["p0"], cfg["seed"])
    b = particle.bernoulli_init(cfg["N"], cfg["p0"], cfg["seed"] + 1)
    rec = particle.run_coupled(
        structured, particle.CoupledStates([a, b]), cfg["t"], cfg["seed"], cps
    )
    _write(cfg["out"], rec.to_csv())
    p, r = rec.pr_values()[-1]
    return f"p_hat={p:.6f} r_hat={r:.6f}"


def _cmd_duality(cfg: dict) -> str:
    family = _family(cfg)
    grid = _floats(cfg["t_grid"])
    rows = ["t,upper,upper_se,lower,lower_se"]
    last = None
    for t in grid:
        est = trees.duality_estimate(family, t, cfg["samples"], cfg["seed"])
        rows.append(
            f"{t:.17g},{est.nu_upp_1:.17g},{est.nu_upp_se:.17g},"
            f"{est.nu_low_1:.17g},{est.nu_low_se:.17g}"
        )
        last = est
    _write(cfg["out"], "\n".join(rows) + "\n")
    return (
        f"upper={last.nu_upp_1:.4f}±{last.nu_upp_se:.4f} "
        f"lower={last.nu_low_1:.4f}±{last.nu_low_se:.4f}"
    )


_DISPATCH = {
    "meanfield": _cmd_meanfield,
    "bivariate": _cmd_bivariate,
    "tree-estimate": _cmd_tree_estimate,
    "uniqueness-scan": _cmd_uniqueness_scan,
    "hlrde": _cmd_hlrde,
    "particle": _cmd_particle,
    "coupled": _cmd_coupled,
    "duality": _cmd_duality,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve(args)
    except SystemExit as exc:
        return int(exc.code or 2)
    if args.dump_config:
        _dump_config(args.command, cfg, args.dump_config)
    try:
        summary = _DISPATCH[args.command](cfg)
    except TreefieldError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    print(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
