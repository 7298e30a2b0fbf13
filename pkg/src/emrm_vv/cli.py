"""Command-line interface.

Subcommands map to the campaign stages: simulate one scene, sweep the
parameter grids, plan a coverage campaign, exercise an FSM, and re-report
from an existing output directory.

Exit codes: 0 success, 1 validation error, 2 runtime error,
3 acceptance-threshold failure (report --check).
"""

from __future__ import annotations

import argparse
import sys

import yaml

from . import campaign, coverage
from .catalog import builtin_catalog, load_catalog
from .errors import (
    ContractViolation,
    DataCorrupt,
    DomainError,
    EmrmVvError,
    InvalidId,
    InvalidScene,
    SchemaError,
    UndefinedTransition,
    UnknownScene,
    UnknownUCA,
)
from .fsm import BUILTIN_MACHINES, coverage as fsm_coverage, run
from .sim import Strategy, VehicleParams, load_scene, simulate

_VALIDATION_ERRORS = (
    ContractViolation, DataCorrupt, DomainError, InvalidId, InvalidScene,
    SchemaError, UndefinedTransition, UnknownScene, UnknownUCA,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_THRESHOLD = 3


def _cmd_simulate(args) -> int:
    scene = load_scene(args.scene)
    params = VehicleParams(mu=args.mu)
    out = simulate(scene, Strategy(args.strategy), params, dt=args.dt)
    print(f"scene: {scene.scene_id}")
    print(f"strategy: {args.strategy}")
    print(f"collided: {str(out.collided).lower()}")
    print(f"residual_kmh: {out.residual_speed:.3f}")
    print(f"min_ttc_s: {out.min_ttc:.3f}")
    print(f"loss_level: {out.loss_level.name}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    kwargs = {}
    if args.spec:
        with open(args.spec) as fh:
            doc = yaml.safe_load(fh) or {}
        if not isinstance(doc, dict):
            raise SchemaError("sweep spec must be a mapping")
        kwargs = {
            k: doc[k]
            for k in ("passage_width", "truck_speed_kmh", "dt", "run_rrt")
            if k in doc
        }
        if "panels" in doc:
            kwargs["panels"] = tuple(doc["panels"])
    if args.panel:
        kwargs["panels"] = (args.panel,)
    spec = campaign.SweepSpec(seed=args.seed, **kwargs)
    grid = campaign.run_sweep(spec, jobs=args.jobs,
                              checkpoint=args.checkpoint)
    report = campaign.compute_kpis(grid)
    plans = campaign.canonical_plans(seed=args.seed)
    manifest = campaign.emit_artifacts(report, grid, plans, args.out)
    for path in manifest:
        print(path)
    return EXIT_OK


def _cmd_plan_coverage(args) -> int:
    with open(args.spec) as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict) or "factors" not in doc:
        raise SchemaError("coverage spec needs a 'factors' list",
                          field="factors")
    domains = []
    for row in doc["factors"]:
        kind = row.get("kind", "continuous")
        if kind == "continuous":
            domains.append(coverage.FactorDomain(
                row["name"], "continuous",
                minimum=row["min"], maximum=row["max"],
                edges=tuple(row.get("edges", ())),
            ))
        else:
            domains.append(coverage.FactorDomain(
                row["name"], "categorical", modes=tuple(row["modes"]),
            ))
    abstraction = coverage.AbstractionMap(tuple(domains))
    tracked = doc.get("tracked_cells", "all")
    if tracked == "all":
        cells = frozenset(abstraction.cells())
    else:
        cells = frozenset(tuple(c) for c in tracked)
    spec = coverage.CoverageSpec(
        tracked_cells=cells,
        n_c=doc.get("n_c", 1),
        strength=doc.get("strength", 2),
        n_m=doc.get("n_m", 0),
        epsilon=doc.get("epsilon", 0.5),
        delta_conf=doc.get("delta_conf", 0.05),
        max_points=doc.get("max_points"),
    )
    testset = coverage.plan(spec, domains,
                            malfunction_regions=doc.get("malfunctions"),
                            seed=doc.get("seed", 0))
    with open(args.out, "w") as fh:
        fh.write(testset.to_yaml())
    print(f"{len(testset)} test points -> {args.out}")
    return EXIT_OK


def _cmd_fsm(args) -> int:
    if args.action != "check":
        raise SchemaError(f"unknown fsm action {args.action!r}")
    machine = BUILTIN_MACHINES[args.machine]()
    if args.events:
        events = [e.strip() for e in args.events.split(",") if e.strip()]
        ledger = machine.new_ledger()
        trace = run(machine, machine.initial, events, ledger)
        print(" -> ".join(trace.visited))
        if not trace.completed:
            print(f"undefined transition at event index {trace.failed_index} "
                  f"({events[trace.failed_index]!r})")
            return EXIT_VALIDATION
        print(f"transition coverage: {fsm_coverage(ledger):.2f}")
        print(f"marked: {str(trace.end in machine.marked).lower()}")
    else:
        print(machine.to_table(), end="")
    return EXIT_OK


def _cmd_report(args) -> int:
    import csv as _csv
    import os

    path = os.path.join(args.indir, "results.csv")
    if not os.path.exists(path):
        raise SchemaError(f"no results.csv under {args.indir}")
    grid: dict = {}
    from .hazard import LossLevel
    from .campaign import CellResult, StrategyOutcome

    with open(path, newline="") as fh:
        for row in _csv.DictReader(fh):
            key = (row["panel"], int(row["cell_x"]), int(row["cell_y"]))
            cell = grid.get(key)
            if cell is None:
                cell = CellResult(
                    row["panel"], int(row["cell_x"]), int(row["cell_y"]),
                    float(row["speed_kmh"]), float(row["ttc_s"]),
                    float(row["mu"]), float(row["passage_m"]), True,
                    {}, row["class"],
                )
                grid[key] = cell
            cell.outcomes[Strategy(row["strategy"])] = StrategyOutcome(
                row["collided"] == "true", float(row["residual_kmh"]),
                float(row["min_ttc_s"]), 0.0, LossLevel[row["loss_level"]],
            )
    report = campaign.compute_kpis(grid)
    campaign.write_report_txt(report, os.path.join(args.indir, "report.txt"))
    with open(os.path.join(args.indir, "report.txt")) as fh:
        print(fh.read(), end="")
    if args.check:
        gap = report.car["EMRM"] - report.car[Strategy.EMERGENCY_STOP.value]
        if gap < 20.0 or report.coverage["parameter_space"] < 100.0:
            print("acceptance thresholds not met", file=sys.stderr)
            return EXIT_THRESHOLD
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emrm-vv",
        description="Verification toolkit for evasive minimum risk maneuvers",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate one scene and strategy")
    p.add_argument("--scene", required=True)
    p.add_argument("--strategy", required=True,
                   choices=[s.value for s in Strategy])
    p.add_argument("--mu", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=0.01)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("sweep", help="run parameter-grid sweeps")
    p.add_argument("--spec", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--panel", choices=sorted(campaign.PANEL_GRIDS))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--checkpoint", default=None)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("plan-coverage", help="plan a coverage campaign")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_plan_coverage)

    p = sub.add_parser("fsm", help="exercise a built-in state machine")
    p.add_argument("action", choices=["check"])
    p.add_argument("--machine", default="emrm",
                   choices=sorted(BUILTIN_MACHINES))
    p.add_argument("--events", default=None)
    p.set_defaults(func=_cmd_fsm)

    p = sub.add_parser("report", help="recompute KPIs from results.csv")
    p.add_argument("--in", dest="indir", required=True)
    p.add_argument("--check", action="store_true")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("catalog", help="validate and print a catalog")
    p.add_argument("--catalog", default=None)
    p.set_defaults(func=_cmd_catalog)
    return parser


def _cmd_catalog(args) -> int:
    cat = load_catalog(args.catalog) if args.catalog else builtin_catalog()
    print(cat.to_yaml(), end="")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (EmrmVvError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
