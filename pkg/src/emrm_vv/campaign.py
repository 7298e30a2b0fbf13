"""Sweep orchestration: parameter grids, mitigability classification, KPIs,
coverage metrics, and artifact emission (CSV, SVG, text report, trace table).

The CSV is the source of truth; SVGs are derived views. Cells execute in
parallel with per-cell deterministic seeds; aggregation is a single-threaded
fold in cell order, so repeated runs with one seed are byte-identical.
"""

from __future__ import annotations

import csv
import hashlib
import os
from dataclasses import dataclass, field
from multiprocessing import Pool

import yaml

from . import catalog as catalog_mod
from .errors import IncompleteGrid, IoError, SchemaError
from .hazard import LossLevel
from .rrt import PlannerConfig, plan_dual
from .sim import (
    KMH,
    Scene,
    Strategy,
    VehicleParams,
    impact_loss_level,
    load_scene,
    simulate,
    stop_boundary_ttc,
)

STRATEGIES = (
    Strategy.EMERGENCY_STOP,
    Strategy.DODGE,
    Strategy.DRIFT_TO_AVOID,
    Strategy.DRIFT_TO_ACCIDENT,
)

# feasibility predicate: a cell is simulated only when the initial gap
# v * TTC is long enough for a standoff plus the ego body, and short enough
# to fit the finite junction approach
GAP_MIN = 3.0
GAP_MAX = 25.0

DEFAULT_PASSAGE = 3.0


def _linspace(lo: float, hi: float, n: int) -> tuple[float, ...]:
    if n == 1:
        return (lo,)
    step = (hi - lo) / (n - 1)
    return tuple(round(lo + i * step, 9) for i in range(n))


PANEL_GRIDS = {
    # panel: (speeds km/h, TTCs s, frictions)
    "a": (_linspace(30, 72, 5), _linspace(0.25, 2.95, 6), (1.0,)),
    "b": (_linspace(30, 72, 43), _linspace(0.25, 2.95, 46), (1.0,)),
    "c": (_linspace(30, 72, 43), (1.0,), _linspace(0.1, 1.0, 10)),
    "d": ((50.0,), _linspace(0.25, 2.95, 26), _linspace(0.1, 1.0, 10)),
}


@dataclass(frozen=True)
class SweepSpec:
    panels: tuple[str, ...] = ("a", "b", "c", "d")
    passage_width: float = DEFAULT_PASSAGE
    truck_speed_kmh: float = 10.0
    strategies: tuple[Strategy, ...] = STRATEGIES
    seed: int = 0
    dt: float = 0.01
    run_rrt: bool = True
    rrt_config: PlannerConfig | None = None

    def __post_init__(self):
        for p in self.panels:
            if p not in PANEL_GRIDS:
                raise SchemaError(f"unknown panel {p!r}", field="panels")
        if not self.strategies:
            raise SchemaError("sweep needs >=1 strategy", field="strategies")


@dataclass(frozen=True)
class StrategyOutcome:
    collided: bool
    residual_kmh: float
    min_ttc: float
    peak_lateral: float
    loss_level: LossLevel


@dataclass(frozen=True)
class CellResult:
    panel: str
    ix: int                      # x index: speed (panels a-c), TTC (panel d)
    iy: int                      # y index: TTC (a, b), friction (c, d)
    speed_kmh: float
    ttc: float
    mu: float
    passage: float
    feasible: bool
    outcomes: dict = field(default_factory=dict)   # Strategy -> StrategyOutcome
    cls: str = "Gray"            # G | Y | O | R | Gray
    rrt_label: str = ""


@dataclass(frozen=True)
class CampaignReport:
    car: dict                    # strategy name -> %
    mean_residual: dict          # strategy name -> km/h over collided cells
    mitigability_success: dict   # strategy name -> %
    mean_delta_loss: dict        # strategy name -> ordinal levels
    region_fractions: dict       # G/Y/O/R -> % of feasible
    coverage: dict               # hazard/uca/parameter_space -> %
    traceability: tuple          # (panel, ix, iy, uca ids, transitions)
    feasible_count: int
    total_cells: int


def cell_feasible(speed_kmh: float, ttc: float) -> bool:
    gap = speed_kmh * KMH * ttc
    return GAP_MIN <= gap <= GAP_MAX


def cell_seed(scene_id: str, panel: str, ix: int, iy: int, seed: int) -> int:
    digest = hashlib.sha256(
        f"{scene_id}|{panel}|{ix}|{iy}|{seed}".encode()
    ).digest()
    return int.from_bytes(digest[:8], "big")


def best_outcome(outcomes: dict) -> StrategyOutcome:
    """Best strategy per cell: avoid first, then lowest loss, then residual."""
    return min(
        outcomes.values(),
        key=lambda o: (o.collided, int(o.loss_level), o.residual_kmh),
    )


def classify_cell(outcomes: dict, speed_kmh: float, ttc: float, mu: float,
                  g: float = 9.81) -> str:
    """Mitigability class for one feasible, fully simulated cell."""
    if ttc >= stop_boundary_ttc(speed_kmh * KMH, mu, g):
        return "G"
    if any(not o.collided for o in outcomes.values()):
        return "Y"
    no_action = impact_loss_level(speed_kmh)
    best = min(int(o.loss_level) for o in outcomes.values())
    return "O" if best < int(no_action) else "R"


def _simulate_cell(args):
    (panel, ix, iy, speed_kmh, ttc, mu, passage, truck_kmh,
     strategies, dt, run_rrt, seed) = args
    scene = Scene(
        scene_id="t_junction",
        ego_speed=speed_kmh * KMH,
        ttc=ttc,
        passage_width=passage,
        truck_speed=truck_kmh * KMH,
    )
    params = VehicleParams(mu=mu)
    outcomes = {}
    for name in strategies:
        strategy = Strategy(name)
        out = simulate(scene, strategy, params, dt=dt)
        outcomes[strategy] = StrategyOutcome(
            out.collided, out.residual_speed, out.min_ttc,
            out.peak_lateral, out.loss_level,
        )
    rrt_label = ""
    if run_rrt:
        config = PlannerConfig(max_iterations=150, light=True,
                               seed=cell_seed(scene.scene_id, panel, ix, iy, seed))
        rrt_label = plan_dual(scene, params, config).label
    cls = classify_cell(outcomes, speed_kmh, ttc, mu)
    return (panel, ix, iy), (outcomes, cls, rrt_label)


def _cell_grid(spec: SweepSpec):
    """Yield (panel, ix, iy, speed, ttc, mu) over all requested panels."""
    for panel in spec.panels:
        speeds, ttcs, mus = PANEL_GRIDS[panel]
        if panel in ("a", "b"):
            for ix, v in enumerate(speeds):
                for iy, ttc in enumerate(ttcs):
                    yield panel, ix, iy, v, ttc, mus[0]
        elif panel == "c":
            for ix, v in enumerate(speeds):
                for iy, mu in enumerate(mus):
                    yield panel, ix, iy, v, ttcs[0], mu
        else:  # d: TTC on x, friction on y
            for ix, ttc in enumerate(ttcs):
                for iy, mu in enumerate(mus):
                    yield panel, ix, iy, speeds[0], ttc, mu


def _job_count(jobs: int | None) -> int:
    env = os.environ.get("EMRM_VV_JOBS")
    if jobs is None and env:
        jobs = int(env)
    if jobs is None:
        jobs = os.cpu_count() or 1
    return max(1, jobs)


def run_sweep(spec: SweepSpec, jobs: int | None = None,
              checkpoint: str | None = None) -> dict:
    """Simulate every feasible grid cell; returns {(panel, ix, iy): CellResult}.

    Infeasible cells are marked Gray without simulating. With a checkpoint
    path, partial results are flushed atomically so an interrupted sweep can
    resume without recomputation.
    """
    done: dict = {}
    if checkpoint and os.path.exists(checkpoint):
        done = _load_checkpoint(checkpoint)

    grid: dict = {}
    tasks = []
    for panel, ix, iy, v, ttc, mu in _cell_grid(spec):
        key = (panel, ix, iy)
        feasible = cell_feasible(v, ttc)
        grid[key] = CellResult(panel, ix, iy, v, ttc, mu, spec.passage_width,
                               feasible)
        if not feasible:
            continue
        if key in done:
            outcomes, cls, rrt_label = done[key]
            grid[key] = CellResult(panel, ix, iy, v, ttc, mu,
                                   spec.passage_width, True,
                                   outcomes, cls, rrt_label)
            continue
        tasks.append((panel, ix, iy, v, ttc, mu, spec.passage_width,
                      spec.truck_speed_kmh,
                      tuple(s.value for s in spec.strategies),
                      spec.dt, spec.run_rrt, spec.seed))

    jobs = _job_count(jobs)
    try:
        if jobs > 1 and len(tasks) > 8:
            with Pool(jobs) as pool:
                results = pool.map(_simulate_cell, tasks, chunksize=32)
        else:
            results = [_simulate_cell(t) for t in tasks]
    except KeyboardInterrupt:
        if checkpoint:
            _save_checkpoint(checkpoint, done)
        raise

    for key, payload in sorted(zip([t[:3] for t in tasks], results),
                               key=lambda kv: kv[0]):
        _key, (outcomes, cls, rrt_label) = payload[0], payload[1]
        c = grid[key]
        grid[key] = CellResult(c.panel, c.ix, c.iy, c.speed_kmh, c.ttc, c.mu,
                               c.passage, True, outcomes, cls, rrt_label)
        done[key] = (outcomes, cls, rrt_label)

    if checkpoint:
        _save_checkpoint(checkpoint, done)
    return grid


def _save_checkpoint(path: str, done: dict) -> None:
    doc = []
    for (panel, ix, iy), (outcomes, cls, rrt_label) in sorted(done.items()):
        doc.append({
            "panel": panel, "ix": ix, "iy": iy, "cls": cls,
            "rrt_label": rrt_label,
            "outcomes": {
                s.value: [o.collided, o.residual_kmh, o.min_ttc,
                          o.peak_lateral, int(o.loss_level)]
                for s, o in outcomes.items()
            },
        })
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        yaml.safe_dump(doc, fh)
    os.replace(tmp, path)


def _load_checkpoint(path: str) -> dict:
    with open(path) as fh:
        doc = yaml.safe_load(fh) or []
    done = {}
    for row in doc:
        outcomes = {
            Strategy(name): StrategyOutcome(vals[0], vals[1], vals[2], vals[3],
                                            LossLevel(vals[4]))
            for name, vals in row["outcomes"].items()
        }
        done[(row["panel"], row["ix"], row["iy"])] = (
            outcomes, row["cls"], row["rrt_label"]
        )
    return done


def canonical_plans(seed: int = 0) -> dict:
    """Dual-tree plans for the reference scenarios used in trajectory renders:
    wide passage on dry asphalt, blocked passage, and ice."""
    cases = {
        "wide_dry": (Scene("t_junction", 12.0, 1.5, 3.8), 1.0),
        "blocked_dry": (Scene("t_junction", 12.0, 1.5, 1.0), 1.0),
        "ice": (Scene("t_junction", 16.0, 1.0, 3.8), 0.15),
    }
    plans = {}
    for name, (scene, mu) in cases.items():
        params = VehicleParams(mu=mu)
        config = PlannerConfig(max_iterations=800,
                               seed=cell_seed(scene.scene_id, name, 0, 0, seed))
        plans[name] = (plan_dual(scene, params, config), scene, params)
    return plans


# --- KPIs ------------------------------------------------------------------

def _require_complete(cells):
    for c in cells:
        if c.feasible and not c.outcomes:
            raise IncompleteGrid(
                f"cell ({c.panel}, {c.ix}, {c.iy}) is feasible but unsimulated"
            )


def triggered_ucas(cell: CellResult) -> tuple[str, ...]:
    """UCA ids whose triggering condition this cell realizes."""
    out = []
    below_boundary = cell.ttc < stop_boundary_ttc(cell.speed_kmh * KMH, cell.mu)
    if cell.cls == "G":
        out.append("UCA2")
    if below_boundary:
        out.append("UCA3")
    if cell.cls in ("O", "R"):
        out.append("UCA1")
    if any(o.collided for o in cell.outcomes.values()):
        out.append("UCA4")
    return tuple(out)


def compute_kpis(grid: dict, baseline: Strategy = Strategy.EMERGENCY_STOP,
                 catalog=None) -> CampaignReport:
    """Per-strategy KPIs plus the aggregate over the full strategy set.

    The aggregate row ("EMRM") takes the best strategy per cell, so it
    dominates every individual strategy by construction.
    """
    catalog = catalog or catalog_mod.builtin_catalog()
    cells = sorted(grid.values(), key=lambda c: (c.panel, c.ix, c.iy))
    _require_complete(cells)
    feasible = [c for c in cells if c.feasible]
    if not feasible:
        raise IncompleteGrid("no feasible cells in grid")

    names = [s.value for s in STRATEGIES if any(s in c.outcomes for c in feasible)]
    car: dict = {}
    mean_residual: dict = {}
    mitig: dict = {}
    delta: dict = {}

    def fold(name, pick):
        avoided, collided_res, improved, dsum = 0, [], 0, 0
        for c in feasible:
            o = pick(c)
            no_action = int(impact_loss_level(c.speed_kmh))
            if not o.collided:
                avoided += 1
            else:
                collided_res.append(o.residual_kmh)
            if int(o.loss_level) < no_action:
                improved += 1
            dsum += no_action - int(o.loss_level)
        n = len(feasible)
        car[name] = 100.0 * avoided / n
        mean_residual[name] = (
            sum(collided_res) / len(collided_res) if collided_res else 0.0
        )
        mitig[name] = 100.0 * improved / n
        delta[name] = dsum / n

    for s in STRATEGIES:
        if s.value in names:
            fold(s.value, lambda c, s=s: c.outcomes[s])
    fold("EMRM", lambda c: best_outcome(c.outcomes))

    fractions = {k: 0 for k in ("G", "Y", "O", "R")}
    for c in feasible:
        fractions[c.cls] += 1
    fractions = {k: 100.0 * v / len(feasible) for k, v in fractions.items()}

    exercised = {"H8"} if feasible else set()
    catalog_only = {h.hazard for h in catalog.hazards} - exercised
    hazard_cov = 100.0 * (len(exercised) + len(catalog_only)) / len(catalog.hazards)
    uca_hit = set()
    trace_rows = []
    for c in feasible:
        ucas = triggered_ucas(c)
        uca_hit.update(ucas)
        if ucas:
            transitions = []
            for u in ucas:
                link = catalog_mod.trace(u, catalog)
                transitions.extend(f"{s}:{e}" for s, e in link.transitions)
            trace_rows.append((c.panel, c.ix, c.iy, ucas, tuple(transitions)))
    uca_cov = 100.0 * len(uca_hit) / len(catalog.ucas)
    param_cov = 100.0 * sum(1 for c in feasible if c.outcomes) / len(feasible)

    return CampaignReport(
        car=car,
        mean_residual=mean_residual,
        mitigability_success=mitig,
        mean_delta_loss=delta,
        region_fractions=fractions,
        coverage={"hazard": hazard_cov, "uca": uca_cov,
                  "parameter_space": param_cov},
        traceability=tuple(trace_rows),
        feasible_count=len(feasible),
        total_cells=len(cells),
    )


# --- artifacts -------------------------------------------------------------

CSV_COLUMNS = ("cell_x", "cell_y", "panel", "speed_kmh", "ttc_s", "mu",
               "passage_m", "strategy", "collided", "residual_kmh",
               "min_ttc_s", "loss_level", "class")


def write_results_csv(grid: dict, path: str) -> None:
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for key in sorted(grid):
                c = grid[key]
                if not c.feasible:
                    continue
                for s in STRATEGIES:
                    if s not in c.outcomes:
                        continue
                    o = c.outcomes[s]
                    writer.writerow([
                        c.ix, c.iy, c.panel,
                        f"{c.speed_kmh:.3f}", f"{c.ttc:.3f}", f"{c.mu:.3f}",
                        f"{c.passage:.3f}", s.value,
                        "true" if o.collided else "false",
                        f"{o.residual_kmh:.3f}", f"{o.min_ttc:.3f}",
                        o.loss_level.name, c.cls,
                    ])
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


_PALETTE = {"G": "#2e8b57", "Y": "#ffd700", "O": "#ff8c00",
            "R": "#cc2222", "Gray": "#bbbbbb"}
_CLASS_INDEX = {"Gray": 0, "G": 1, "Y": 2, "O": 3, "R": 4}


def write_heatmap(grid: dict, panel: str, path: str) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from matplotlib.colors import ListedColormap

    cells = [c for c in grid.values() if c.panel == panel]
    if not cells:
        raise IoError(f"no cells for panel {panel!r}")
    nx = max(c.ix for c in cells) + 1
    ny = max(c.iy for c in cells) + 1
    img = [[0] * nx for _ in range(ny)]
    for c in cells:
        img[c.iy][c.ix] = _CLASS_INDEX[c.cls]
    cmap = ListedColormap([_PALETTE["Gray"], _PALETTE["G"], _PALETTE["Y"],
                           _PALETTE["O"], _PALETTE["R"]])
    fig, ax = plt.subplots(figsize=(7, 5))
    speeds, ttcs, mus = PANEL_GRIDS[panel]
    if panel in ("a", "b"):
        extent = (speeds[0], speeds[-1], ttcs[0], ttcs[-1])
        xlabel, ylabel = "ego speed (km/h)", "TTC (s)"
        xs = [speeds[0] + i * (speeds[-1] - speeds[0]) / 200 for i in range(201)]
        curve = [stop_boundary_ttc(v * KMH, mus[0]) for v in xs]
    elif panel == "c":
        extent = (speeds[0], speeds[-1], mus[0], mus[-1])
        xlabel, ylabel = "ego speed (km/h)", "friction mu"
        xs = [speeds[0] + i * (speeds[-1] - speeds[0]) / 200 for i in range(201)]
        curve = [min(1.2, v * KMH / (2 * 9.81 * ttcs[0])) for v in xs]
    else:
        extent = (ttcs[0], ttcs[-1], mus[0], mus[-1])
        xlabel, ylabel = "TTC (s)", "friction mu"
        xs = [ttcs[0] + i * (ttcs[-1] - ttcs[0]) / 200 for i in range(201)]
        curve = [min(1.2, speeds[0] * KMH / (2 * 9.81 * t)) for t in xs]
    ax.imshow(img, origin="lower", aspect="auto", cmap=cmap, vmin=0, vmax=4,
              extent=extent, interpolation="nearest")
    ax.plot(xs, curve, "w--", linewidth=1.5)
    ax.set_ylim(extent[2], extent[3])
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(f"mitigability, panel {panel}")
    try:
        fig.savefig(path)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    finally:
        plt.close(fig)


def write_trajectories(plan, scene: Scene, params: VehicleParams,
                       path: str) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(8, 4))
    face_x = scene.gap + params.length / 2.0
    truck = plt.Rectangle((face_x, scene.truck_y_low), 2.5,
                          scene.truck_y_high - scene.truck_y_low,
                          color="#555555")
    ax.add_patch(truck)
    for tree, color in ((plan.goal_tree, "#2e8b57"),
                        (plan.failsafe_tree, "#ff8c00")):
        for node in tree.nodes:
            if node.parent is None:
                continue
            p = tree.nodes[node.parent].state
            s = node.state
            ax.plot([p.x, s.x], [p.y, s.y], color=color, linewidth=0.5)
    for traj, style in ((plan.avoidance_path, "g-"),
                        (plan.failsafe_path, "r-")):
        if traj:
            ax.plot([s.x for s in traj], [s.y for s in traj], style,
                    linewidth=2.0)
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_title(f"dual-tree plan, {scene.scene_id}")
    try:
        fig.savefig(path)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    finally:
        plt.close(fig)


def write_report_txt(report: CampaignReport, path: str) -> None:
    lines = ["KPI summary", "==========="]
    header = f"{'strategy':<16} {'CAR %':>8} {'residual km/h':>14} " \
             f"{'mitig %':>8} {'dLoss':>7}"
    lines.append(header)
    for name in report.car:
        lines.append(
            f"{name:<16} {report.car[name]:>8.1f} "
            f"{report.mean_residual[name]:>14.1f} "
            f"{report.mitigability_success[name]:>8.1f} "
            f"{report.mean_delta_loss[name]:>7.2f}"
        )
    lines.append("")
    lines.append("Region fractions (% of feasible)")
    for k in ("G", "Y", "O", "R"):
        lines.append(f"  {k}: {report.region_fractions[k]:.1f}")
    lines.append("")
    lines.append("Coverage")
    for k, v in report.coverage.items():
        lines.append(f"  {k}: {v:.1f}%")
    lines.append("")
    lines.append(f"feasible cells: {report.feasible_count} "
                 f"of {report.total_cells}")
    try:
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def write_trace_csv(report: CampaignReport, path: str) -> None:
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["panel", "cell_x", "cell_y", "ucas",
                             "fsm_transitions"])
            for panel, ix, iy, ucas, transitions in report.traceability:
                writer.writerow([panel, ix, iy, ";".join(ucas),
                                 ";".join(transitions)])
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def emit_artifacts(report: CampaignReport | None, grid: dict, plans: dict,
                   outdir: str) -> list[str]:
    """Write all artifacts under outdir; returns the file manifest."""
    os.makedirs(outdir, exist_ok=True)
    manifest = []

    path = os.path.join(outdir, "results.csv")
    write_results_csv(grid, path)
    manifest.append(path)

    for panel in sorted({c.panel for c in grid.values()}):
        path = os.path.join(outdir, f"mitigability_{panel}.svg")
        write_heatmap(grid, panel, path)
        manifest.append(path)

    for name, (plan, scene, params) in sorted(plans.items()):
        path = os.path.join(outdir, f"trajectories_{name}.svg")
        write_trajectories(plan, scene, params, path)
        manifest.append(path)

    if report is not None:
        path = os.path.join(outdir, "report.txt")
        write_report_txt(report, path)
        manifest.append(path)

        path = os.path.join(outdir, "trace.csv")
        write_trace_csv(report, path)
        manifest.append(path)
    return manifest
