"""Command-line entry point.

Exit codes: 0 pass, 1 consistency failure, 2 configuration error,
3 inconclusive outcomes only, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .capacity import relative_capacity, refinement_sweep
from .config import COMMANDS, ConfigError, RunConfig, parse_config
from .forms import neumann_form, restrict_dirichlet
from .mesh import CoefficientField
from .region import RegionSpec
from .report import write_csv, write_dat, write_json
from .scenarios import (
    SPECIAL,
    Scenario,
    VerdictReport,
    halfline_scenario,
    load_catalog,
    run_catalog,
    run_disjoint_interval,
    run_halfline_counterexample,
    run_scenario,
)
from .semigroup import SemigroupOperator, conservativeness_defect, default_battery, evolve, invariance_defect

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_INCONCLUSIVE, EXIT_IO = 0, 1, 2, 3, 4

CAPACITY_COLUMNS = ["mesh_level", "h", "neighborhood_index", "epsilon", "value", "extrapolated", "verdict"]
SUMMARY_COLUMNS = ["scenario", "kind", "status", "capacity_verdict", "I", "II", "III", "IV", "violations", "inconclusive"]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("run options (flags override the config file)")
    g.add_argument("--config", help="TOML file with run keys (top level or a [run] table)")
    g.add_argument("--scenario", help="catalog id, 'halfline', 'disjoint' or 'all' (verify)")
    g.add_argument("--levels", help="comma-separated element counts, e.g. 128,256,512 (default 128,256,512,1024)")
    g.add_argument("--times", help="comma-separated times (default 0.01,0.05,0.1,0.5)")
    g.add_argument("--out", help="output directory (default ./out)")
    g.add_argument("--format", choices=["csv", "json", "both"], help="artifact formats (default both)")
    g.add_argument("--tol-capacity", dest="tol_capacity", type=float, help="capacity zero threshold (default 1e-4)")
    g.add_argument("--tol-pos", dest="tol_pos", type=float, help="positivity tolerance (default 1e-9)")
    g.add_argument("--domain", help="mesh interval lo,hi, e.g. --domain=-8,8 (default -1,1)")
    g.add_argument("--coeff", help="coefficient, e.g. constant:1, power_law:2, piecewise:values=0,1;breaks=0")
    g.add_argument("--omega", help="open set, e.g. '(0,1]' or '[-1,0)U(0,1]'; X for the whole space")
    g.add_argument("--target", help="target set, e.g. '{0}', '[a,b]', '{}' or 'boundary' (default)")
    g.add_argument("--schedule", help="neighborhood radii, strictly decreasing (default: 10 local elements, halved 6 times)")
    g.add_argument("--grading", choices=["uniform", "geometric"], help="mesh grading (default uniform)")
    g.add_argument("--norm", choices=["l1", "l2", "inf"], help="defect norm for verdicts (default l2)")
    g.add_argument("--kind", choices=["full", "dirichlet", "neumann"], help="semigroup for 'evolve' (default dirichlet)")
    g.add_argument("--phi", help="initial function for 'evolve': one, x, x2, sin, abs, xplus, step, hat1..3")
    g.add_argument("--consistent-mass", dest="lumped", action="store_const", const=False, help="use the consistent mass matrix")

    p = argparse.ArgumentParser(prog="dclab", description="Dirichlet-form lab on one-dimensional meshes")
    p.add_argument("--version", action="version", version=f"dclab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "capacity": "relative capacity on the finest mesh level",
        "evolve": "evolve a test function and report submarkovian diagnostics",
        "verify": "run scenarios and check the equivalences",
        "sweep": "capacity across mesh levels with a zero/positive verdict",
        "catalog": "list the packaged scenarios",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return p


def _flags(ns: argparse.Namespace) -> dict:
    keys = ["scenario", "levels", "times", "out", "format", "tol_capacity", "tol_pos", "domain", "coeff", "omega",
            "target", "schedule", "grading", "norm", "kind", "phi", "lumped"]
    return {k: getattr(ns, k) for k in keys if getattr(ns, k, None) is not None}


def scenario_for(cfg: RunConfig) -> Scenario:
    if cfg.scenario == "halfline":
        sc = halfline_scenario()
        return sc if "levels" not in cfg.explicit else Scenario(**{**sc.__dict__, "levels": cfg.levels})
    if cfg.scenario == "disjoint":
        return Scenario("disjoint", CoefficientField.constant(), omega="[-1,0)U(0,1]", levels=cfg.levels)
    return cfg.to_scenario()


def _region(cfg: RunConfig, sc: Scenario) -> RegionSpec:
    return RegionSpec.from_strings(sc.omega, sc.target, cfg.schedule)


def _emit(cfg: RunConfig, stem: str, rows: list[dict] | None, columns: list[str] | None, obj) -> None:
    out = Path(cfg.out)
    if cfg.format in ("csv", "both") and rows is not None:
        write_csv(out / f"{stem}.csv", rows, columns)
    if cfg.format in ("json", "both"):
        write_json(out / f"{stem}.json", obj)


def cmd_capacity(cfg: RunConfig) -> int:
    sc = scenario_for(cfg)
    n = sc.levels[-1]
    form = sc.build(n)
    est = relative_capacity(form, _region(cfg, sc), zero_threshold=sc.zero_threshold)
    rows = [
        dict(mesh_level=n, h=est.h, neighborhood_index=k, epsilon=e, value=v, extrapolated=est.extrapolated, verdict="")
        for k, (e, v) in enumerate(zip(est.epsilons, est.values))
    ] or [dict(mesh_level=n, h=est.h, neighborhood_index=-1, epsilon=0.0, value=0.0, extrapolated=0.0, verdict="")]
    records = [
        {"scenario": sc.id, "level": n, "operation": f"capacity[eps={e:.12g}]", "value": v}
        for e, v in zip(est.epsilons, est.values)
    ] + [{"scenario": sc.id, "level": n, "operation": "capacity_extrapolated", "value": est.extrapolated}]
    _emit(cfg, "capacity", rows, CAPACITY_COLUMNS, {"scenario": sc.id, "warnings": est.warnings, "records": records})
    write_dat(Path(cfg.out) / "capacity.dat", est.epsilons, est.values, "epsilon capacity")
    print(f"capacity[{sc.id}] level {n}: limit {est.extrapolated:.12g} ({len(est.values)} neighborhoods)")
    for w in est.warnings:
        print(f"warning: {w}")
    return EXIT_OK


def cmd_sweep(cfg: RunConfig) -> int:
    sc = scenario_for(cfg)
    if len(sc.levels) < 3:
        raise ConfigError("field 'levels': a sweep needs at least 3 mesh levels")
    res = refinement_sweep(sc.build, _region(cfg, sc), sc.levels, zero_threshold=sc.zero_threshold)
    records = [
        {"scenario": sc.id, "level": lvl, "operation": "capacity_extrapolated", "value": est.extrapolated}
        for lvl, est in zip(res.levels, res.estimates)
    ]
    summary = {"scenario": sc.id, "verdict": res.verdict, "limit": res.limit, "exponents": res.exponents, "records": records}
    _emit(cfg, "sweep", res.csv_rows(), CAPACITY_COLUMNS, summary)
    write_dat(Path(cfg.out) / "sweep.dat", res.h, res.level_values, "h capacity")
    print(f"sweep[{sc.id}]: verdict {res.verdict}, limit {res.limit:.12g}")
    return EXIT_INCONCLUSIVE if res.verdict == "inconclusive" else EXIT_OK


def cmd_evolve(cfg: RunConfig) -> int:
    sc = scenario_for(cfg)
    n = sc.levels[-1]
    F = sc.build(n)
    region = sc.region
    form = {"full": lambda: F, "dirichlet": lambda: restrict_dirichlet(F, region), "neumann": lambda: neumann_form(F, region)}[cfg.kind]()
    op = SemigroupOperator(form)
    battery = default_battery(F.mesh)
    if cfg.phi not in battery:
        raise ConfigError(f"field 'phi': unknown test function {cfg.phi!r}; choose from {', '.join(battery)}")
    phi = form.sample(battery[cfg.phi])
    trace, records = [], []
    bad = False
    losses = []
    for t in sc.times:
        ev = evolve(op, t, phi)
        for node, v in zip(form.active_nodes, ev.values):
            trace.append({"t": t, "node": int(node), "x": F.mesh.nodes[node], "value": v})
        diag = {
            "mass_loss": ev.mass_loss,
            "negativity": ev.negativity,
            "overshoot": ev.overshoot,
            "conservativeness_defect": conservativeness_defect(op, region, t, sc.norm),
            "invariance_defect": invariance_defect(op, region, t, sc.norm),
        }
        for name, v in diag.items():
            records.append({"scenario": sc.id, "level": n, "t": t, "operation": f"{cfg.kind}:{name}", "value": v})
        losses.append(ev.mass_loss)
        if sc.lumped and np.all(phi >= 0) and (ev.negativity > cfg.tol_pos or ev.overshoot > cfg.tol_pos):
            bad = True
    _emit(cfg, "evolve", trace, ["t", "node", "x", "value"], {"scenario": sc.id, "method": op.resolved_method(), "records": records})
    write_dat(Path(cfg.out) / "evolve.dat", sc.times, losses, "t mass_loss")
    print(f"evolve[{sc.id}] {cfg.kind} phi={cfg.phi} level {n}: " + ", ".join(f"t={t:g} loss={l:.6g}" for t, l in zip(sc.times, losses)))
    return EXIT_FAIL if bad else EXIT_OK


def _summary_row(rep: VerdictReport) -> dict:
    row = {
        "scenario": rep.scenario,
        "kind": rep.kind,
        "status": rep.status,
        "capacity_verdict": rep.capacity_verdict,
        "violations": ";".join(rep.violations),
        "inconclusive": ";".join(rep.inconclusive),
    }
    for c in ("I", "II", "III", "IV"):
        if c in rep.conditions:
            t = rep.conditions[c]["truth"]
            row[c] = "?" if t is None else ("T" if t else "F")
    return row


def cmd_verify(cfg: RunConfig) -> int:
    if cfg.scenario == "all":
        reports = run_catalog([*load_catalog(), *SPECIAL])
    elif cfg.scenario == "halfline":
        reports = [run_halfline_counterexample(cfg.levels) if "levels" in cfg.explicit else run_halfline_counterexample()]
    elif cfg.scenario == "disjoint":
        reports = [run_disjoint_interval(cfg.levels) if "levels" in cfg.explicit else run_disjoint_interval()]
    else:
        reports = [run_scenario(cfg.to_scenario())]
    rows = [_summary_row(r) for r in reports]
    _emit(cfg, "verify", rows, SUMMARY_COLUMNS, {"reports": [r.to_dict() for r in reports]})
    out = Path(cfg.out)
    for r in reports:
        caps = [x for x in r.records if x["operation"] in ("capacity", "capacity_boundary")]
        if caps:
            hs = [r.h[r.levels.index(x["level"])] for x in caps]
            write_dat(out / f"{r.scenario}_capacity.dat", hs, [x["value"] for x in caps], "h capacity")
    for row in rows:
        extra = f" violations={row['violations']}" if row["violations"] else ""
        print(f"{row['scenario']:14s} {row['status']:12s} capacity={row['capacity_verdict']}{extra}")
    for r in reports:
        for key in ("capacity",):
            if key in r.conditions and r.kind == "halfline":
                print(f"halfline capacity limit {r.conditions[key]['value']:.12g} (lower bound 1/(4 pi) = {1 / (4 * np.pi):.6g})")
    statuses = {r.status for r in reports}
    if "fail" in statuses:
        return EXIT_FAIL
    if "inconclusive" in statuses:
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def cmd_catalog(cfg: RunConfig) -> int:
    cat = load_catalog()
    rows = [
        {"scenario": sc.id, "coeff": sc.coeff.describe(), "omega": sc.omega, "target": sc.target,
         "levels": " ".join(map(str, sc.levels)), "description": sc.description}
        for sc in cat.values()
    ]
    rows += [{"scenario": s, "coeff": "", "omega": "", "target": "", "levels": "", "description": "special construction"} for s in SPECIAL]
    _emit(cfg, "catalog", rows, list(rows[0]), {"scenarios": rows})
    for r in rows:
        print(f"{r['scenario']:14s} {r['coeff']:34s} {r['omega']:16s} {r['description']}")
    return EXIT_OK


HANDLERS = {"capacity": cmd_capacity, "sweep": cmd_sweep, "evolve": cmd_evolve, "verify": cmd_verify, "catalog": cmd_catalog}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg = parse_config(ns.command, ns.config, _flags(ns))
        return HANDLERS[cfg.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
