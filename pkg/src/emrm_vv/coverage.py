"""Minimum-scenario-set planning: factor abstraction, coverage constraints,
covering arrays, boundary seeding, and importance-weighted success estimation.

The planner is coverage-first and greedy. Construction order: boundary seeds,
covering-array core, malfunction allocation, risk-weighted top-up. In
planning-only mode (stub oracle) the per-cell stopping rule degrades from
Wilson half-widths to the distribution-free Hoeffding count.
"""

from __future__ import annotations

import enum
import itertools
import math
import random
from dataclasses import dataclass, field
from statistics import NormalDist

import yaml

from .errors import (
    ContractViolation,
    DegeneratePrior,
    DomainError,
    EmptyDomain,
    EmptySet,
    Infeasible,
)


class Monotonicity(enum.Enum):
    SAFE_LOW = "SafeLow"
    SAFE_HIGH = "SafeHigh"
    NONE = "None"


@dataclass(frozen=True)
class FactorDomain:
    """One test dimension: continuous with bin edges, or categorical modes."""

    name: str
    kind: str  # "continuous" | "categorical"
    minimum: float | None = None
    maximum: float | None = None
    edges: tuple[float, ...] = ()
    modes: tuple[str, ...] = ()
    monotonicity: Monotonicity = Monotonicity.NONE

    def __post_init__(self):
        if self.kind == "continuous":
            if self.minimum is None or self.maximum is None:
                raise ContractViolation(f"factor {self.name}: continuous needs min/max")
            edges = tuple(float(e) for e in self.edges)
            if not edges:
                edges = (float(self.minimum), float(self.maximum))
            if any(b <= a for a, b in zip(edges, edges[1:])):
                raise ContractViolation(
                    f"factor {self.name}: bin edges must be strictly increasing"
                )
            object.__setattr__(self, "edges", edges)
        elif self.kind == "categorical":
            if not self.modes:
                raise ContractViolation(f"factor {self.name}: needs >=1 mode")
        else:
            raise ContractViolation(f"factor {self.name}: unknown kind {self.kind!r}")

    @property
    def levels(self) -> int:
        if self.kind == "categorical":
            return len(self.modes)
        return max(1, len(self.edges) - 1)

    def level_of(self, value) -> int:
        """Abstraction map for this factor: raw value to level index."""
        if self.kind == "categorical":
            try:
                return self.modes.index(value)
            except ValueError:
                raise DomainError(f"factor {self.name}: unknown mode {value!r}") from None
        v = float(value)
        if not self.edges[0] <= v <= self.edges[-1]:
            raise DomainError(f"factor {self.name}: value {v} outside domain")
        for i in range(len(self.edges) - 1):
            if v < self.edges[i + 1]:
                return i
        return self.levels - 1

    def representative(self, level: int):
        """Canonical concrete value inside one abstract level."""
        if self.kind == "categorical":
            return self.modes[level]
        lo, hi = self.edges[level], self.edges[level + 1]
        return (lo + hi) / 2.0


@dataclass(frozen=True)
class AbstractionMap:
    """Maps concrete points to cells of the abstract level lattice."""

    domains: tuple[FactorDomain, ...]

    def __post_init__(self):
        if not self.domains:
            raise EmptyDomain("abstraction map needs >=1 factor domain")

    def cell_of(self, values) -> tuple[int, ...]:
        if len(values) != len(self.domains):
            raise ContractViolation("point arity does not match factor count")
        return tuple(d.level_of(v) for d, v in zip(self.domains, values))

    def cells(self):
        return itertools.product(*(range(d.levels) for d in self.domains))


@dataclass(frozen=True)
class CoverageSpec:
    tracked_cells: frozenset[tuple[int, ...]]
    n_c: int = 1
    strength: int = 2
    influential: tuple[int, ...] = ()   # factor indices in Q_f; empty = all
    n_m: int = 0
    epsilon: float = 0.1
    delta_conf: float = 0.05
    max_points: int | None = None

    def __post_init__(self):
        if self.n_c < 1:
            raise ContractViolation("per-cell minimum n_c must be >= 1")
        if self.strength not in (2, 3):
            raise ContractViolation("covering strength t must be 2 or 3")
        if not 0.0 < self.epsilon < 1.0 or not 0.0 < self.delta_conf < 1.0:
            raise ContractViolation("epsilon and delta_conf must lie in (0, 1)")


@dataclass(frozen=True)
class TestPoint:
    values: tuple
    malfunction: str | None = None
    provenance: str = "covering-array"  # seeded-boundary | covering-array | malfunction | top-up
    cell: tuple[int, ...] = ()
    trace: tuple[str, ...] = ()


@dataclass(frozen=True)
class TestSet:
    points: tuple[TestPoint, ...]

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def to_yaml(self) -> str:
        doc = {
            "schema": "emrm-vv-plan/1",
            "points": [
                {
                    "values": list(p.values),
                    "malfunction": p.malfunction,
                    "provenance": p.provenance,
                    "cell": list(p.cell),
                    "trace": list(p.trace),
                }
                for p in self.points
            ],
        }
        return yaml.safe_dump(doc, sort_keys=False)


@dataclass(frozen=True)
class OutcomeRecord:
    point: TestPoint
    outcome: int           # Bernoulli Y
    proposal: float = 1.0  # q(d)
    prior: float = 1.0     # exposure prior pi(d)

    def __post_init__(self):
        if self.outcome not in (0, 1):
            raise ContractViolation("outcome must be 0 or 1")
        if self.proposal <= 0.0:
            raise ContractViolation("proposal density must be positive where sampled")

    @property
    def weight(self) -> float:
        w = self.prior / self.proposal
        if not math.isfinite(w):
            raise ContractViolation("importance weight must be finite")
        return w


@dataclass(frozen=True)
class EstimateWithCI:
    estimate: float
    lo: float
    hi: float
    n_eff: float


def hoeffding_min_samples(epsilon: float, delta_conf: float) -> int:
    """Smallest n with 2 exp(-2 n eps^2) <= delta."""
    if not 0.0 < epsilon < 1.0:
        raise DomainError(f"epsilon {epsilon} outside (0, 1)")
    if not 0.0 < delta_conf < 1.0:
        raise DomainError(f"delta_conf {delta_conf} outside (0, 1)")
    return math.ceil(math.log(2.0 / delta_conf) / (2.0 * epsilon * epsilon))


def _wilson(successes: float, n: float, confidence: float) -> tuple[float, float]:
    z = NormalDist().inv_cdf(0.5 + confidence / 2.0)
    p = successes / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2.0 * n)) / denom
    half = (z / denom) * math.sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n))
    return max(0.0, center - half), min(1.0, center + half)


def wilson_interval(successes: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval, clamped to [0, 1]."""
    if n < 1:
        raise DomainError("wilson interval requires n >= 1")
    if not 0 <= successes <= n:
        raise DomainError(f"successes {successes} outside [0, {n}]")
    if not 0.0 < confidence < 1.0:
        raise DomainError("confidence must lie in (0, 1)")
    lo, hi = _wilson(float(successes), float(n), confidence)
    if successes == 0:
        lo = 0.0
    if successes == n:
        hi = 1.0
    return lo, hi


def weighted_success(records, confidence: float = 0.95) -> EstimateWithCI:
    """Importance-weighted success rate with a Wilson interval on n_eff."""
    records = list(records)
    if not records:
        raise EmptySet("weighted_success needs >=1 outcome record")
    weights = [r.weight for r in records]
    total = sum(weights)
    if total <= 0.0:
        raise EmptySet("all importance weights are zero")
    estimate = sum(w * r.outcome for w, r in zip(weights, records)) / total
    n_eff = total * total / sum(w * w for w in weights)
    n_ci = max(1, math.floor(n_eff))
    lo, hi = _wilson(estimate * n_ci, n_ci, confidence)
    lo = min(lo, estimate)
    hi = max(hi, estimate)
    return EstimateWithCI(estimate, lo, hi, n_eff)


def generate_covering_array(levels, t: int, seed: int = 0) -> list[tuple[int, ...]]:
    """Strength-t covering array by greedy density search.

    Each emitted row is a full level assignment; the greedy step picks the
    candidate row covering the most still-uncovered t-tuples, breaking ties
    lexicographically so output is deterministic for a given seed.
    """
    levels = list(levels)
    if t > len(levels):
        raise DomainError(f"strength {t} exceeds factor count {len(levels)}")
    if any(k < 1 for k in levels):
        raise DomainError("every factor needs >=1 level")
    k = len(levels)
    factor_sets = list(itertools.combinations(range(k), t))
    uncovered: set[tuple] = set()
    for fs in factor_sets:
        for combo in itertools.product(*(range(levels[j]) for j in fs)):
            uncovered.add((fs, combo))
    rng = random.Random(seed)
    rows: list[tuple[int, ...]] = []
    full_space = math.prod(levels)
    exhaustive = full_space <= 4096
    while uncovered:
        if exhaustive:
            candidates = itertools.product(*(range(kj) for kj in levels))
        else:
            candidates = sorted(
                tuple(rng.randrange(kj) for kj in levels) for _ in range(256)
            )
        best_row = None
        best_gain = -1
        for row in candidates:
            gain = sum(
                1
                for fs in factor_sets
                if (fs, tuple(row[j] for j in fs)) in uncovered
            )
            if gain > best_gain:
                best_gain = gain
                best_row = row
        if best_gain <= 0:
            # random candidates missed; fall back to repairing one tuple
            fs, combo = min(uncovered)
            row = [0] * k
            for j, lvl in zip(fs, combo):
                row[j] = lvl
            best_row = tuple(row)
        rows.append(best_row)
        for fs in factor_sets:
            uncovered.discard((fs, tuple(best_row[j] for j in fs)))
    return rows


def seed_boundaries(domains) -> list[TestPoint]:
    """Boundary seeds: every continuous bin edge, every categorical mode."""
    domains = list(domains)
    if not domains:
        raise EmptyDomain("seed_boundaries needs >=1 factor domain")

    def midpoint(d: FactorDomain):
        if d.kind == "categorical":
            return d.modes[0]
        return (d.edges[0] + d.edges[-1]) / 2.0

    points = []
    for j, dom in enumerate(domains):
        values = dom.edges if dom.kind == "continuous" else dom.modes
        for v in values:
            point = tuple(
                v if i == j else midpoint(d) for i, d in enumerate(domains)
            )
            points.append(TestPoint(point, provenance="seeded-boundary"))
    return points


def importance_proposal(prior) -> tuple[float, ...]:
    """Risk-weighted proposal q proportional to the square root of the prior."""
    prior = [float(p) for p in prior]
    if any(p < 0 for p in prior):
        raise DomainError("exposure prior must be non-negative")
    roots = [math.sqrt(p) for p in prior]
    total = sum(roots)
    if total <= 0.0:
        raise DegeneratePrior("exposure prior carries no mass")
    return tuple(r / total for r in roots)


@dataclass(frozen=True)
class CoverageReport:
    satisfied: dict[str, bool]
    violations: dict[str, list]

    @property
    def ok(self) -> bool:
        return all(self.satisfied.values())


def check_coverage(testset: TestSet, spec: CoverageSpec,
                   abstraction: AbstractionMap,
                   malfunction_regions: dict[str, object] | None = None) -> CoverageReport:
    """Exhaustive check of the four coverage constraints.

    C1 per-cell counts, C2 boundary values, C3 t-tuple coverage over the
    influential factors, C4 per-malfunction counts.
    """
    malfunction_regions = malfunction_regions or {}
    domains = abstraction.domains
    violations: dict[str, list] = {"C1": [], "C2": [], "C3": [], "C4": []}

    cells = [abstraction.cell_of(p.values) for p in testset]
    counts: dict[tuple[int, ...], int] = {}
    for c in cells:
        counts[c] = counts.get(c, 0) + 1
    for cell in sorted(spec.tracked_cells):
        if counts.get(cell, 0) < spec.n_c:
            violations["C1"].append(("cell", cell, counts.get(cell, 0)))

    for j, dom in enumerate(domains):
        if dom.kind != "continuous":
            continue
        hit = {float(p.values[j]) for p in testset}
        for edge in dom.edges:
            if not any(abs(v - edge) <= 1e-9 for v in hit):
                violations["C2"].append(("boundary", dom.name, edge))

    influential = spec.influential or tuple(range(len(domains)))
    t = min(spec.strength, len(influential))
    level_rows = [tuple(c[j] for j in influential) for c in cells]
    for fs in itertools.combinations(range(len(influential)), t):
        realized = {tuple(row[j] for j in fs) for row in level_rows}
        want = itertools.product(*(range(domains[influential[j]].levels) for j in fs))
        for combo in want:
            if combo not in realized:
                violations["C3"].append(
                    ("tuple", tuple(domains[influential[j]].name for j in fs), combo)
                )

    for m in sorted(malfunction_regions):
        n = sum(1 for p in testset if p.malfunction == m)
        if n < spec.n_m:
            violations["C4"].append(("malfunction", m, n))

    satisfied = {k: not v for k, v in violations.items()}
    return CoverageReport(satisfied, violations)


def plan(spec: CoverageSpec, domains, malfunction_regions=None,
         prior=None, oracle=None, seed: int = 0) -> TestSet:
    """Coverage-first greedy construction of a test set.

    Steps: boundary seeds, covering-array core, malfunction allocation,
    risk-weighted top-up of tracked cells, final self-check. With a real
    oracle the top-up stops when the per-cell Wilson half-width drops to
    epsilon; with no oracle it stops at the Hoeffding count for the same
    (epsilon, delta) target, capped at max(n_c, that count).
    """
    domains = tuple(domains)
    abstraction = AbstractionMap(domains)
    malfunction_regions = malfunction_regions or {}
    all_cells = set(abstraction.cells())
    for cell in spec.tracked_cells:
        if cell not in all_cells:
            raise Infeasible(f"tracked cell {cell} outside the level lattice")

    points: list[TestPoint] = []

    def tag(p: TestPoint) -> TestPoint:
        cell = abstraction.cell_of(p.values)
        trace = tuple(f"cell:{','.join(map(str, cell))}",)
        if p.malfunction:
            trace = trace + (f"malfunction:{p.malfunction}",)
        return TestPoint(p.values, p.malfunction, p.provenance, cell, trace)

    # step 1: boundary seeds
    points.extend(tag(p) for p in seed_boundaries(domains))

    # step 2: covering-array core over the influential factors
    influential = spec.influential or tuple(range(len(domains)))
    t = min(spec.strength, len(influential))
    rows = generate_covering_array(
        [domains[j].levels for j in influential], t, seed=seed
    )
    for row in rows:
        values = []
        it = iter(row)
        for j, dom in enumerate(domains):
            if j in influential:
                values.append(dom.representative(next(it)))
            else:
                values.append(dom.representative(0))
        points.append(tag(TestPoint(tuple(values), provenance="covering-array")))

    # step 3: malfunction allocation
    for m in sorted(malfunction_regions):
        region = malfunction_regions[m]
        have = sum(1 for p in points if p.malfunction == m)
        base = tuple(d.representative(0) for d in domains)
        values = tuple(region.get(d.name, v) for d, v in zip(domains, base)) \
            if isinstance(region, dict) else base
        for _ in range(max(0, spec.n_m - have)):
            points.append(tag(TestPoint(values, malfunction=m, provenance="malfunction")))

    # step 4: risk-weighted top-up of tracked cells
    tracked = sorted(spec.tracked_cells)
    if tracked:
        if prior is None:
            prior = [1.0] * len(tracked)
        q = importance_proposal(prior)
        target = max(spec.n_c, hoeffding_min_samples(spec.epsilon, spec.delta_conf)) \
            if oracle is None else spec.n_c
        rng = random.Random(seed)
        counts: dict[tuple[int, ...], int] = {}
        for p in points:
            counts[p.cell] = counts.get(p.cell, 0) + 1
        records: dict[tuple[int, ...], list[OutcomeRecord]] = {c: [] for c in tracked}

        def representative_point(cell):
            return tuple(d.representative(lvl) for d, lvl in zip(domains, cell))

        def cell_done(cell) -> bool:
            if oracle is None:
                return counts.get(cell, 0) >= target
            recs = records[cell]
            if counts.get(cell, 0) < spec.n_c or not recs:
                return False
            est = weighted_success(recs)
            return (est.hi - est.lo) / 2.0 <= spec.epsilon

        # honour minimum counts first, deterministically
        for cell in tracked:
            while counts.get(cell, 0) < (target if oracle is None else spec.n_c):
                values = representative_point(cell)
                p = tag(TestPoint(values, provenance="top-up"))
                points.append(p)
                counts[cell] = counts.get(cell, 0) + 1
                if oracle is not None:
                    qi = q[tracked.index(cell)]
                    records[cell].append(
                        OutcomeRecord(p, int(bool(oracle(p))), proposal=max(qi, 1e-12),
                                      prior=float(prior[tracked.index(cell)]))
                    )
        # then proposal-driven sampling until every tracked cell is done
        budget = spec.max_points or (len(points) + 200 * max(1, len(tracked)))
        while not all(cell_done(c) for c in tracked) and len(points) < budget:
            r = rng.random()
            acc = 0.0
            idx = len(tracked) - 1
            for i, qi in enumerate(q):
                acc += qi
                if r <= acc:
                    idx = i
                    break
            cell = tracked[idx]
            if cell_done(cell):
                continue
            p = tag(TestPoint(representative_point(cell), provenance="top-up"))
            points.append(p)
            counts[cell] = counts.get(cell, 0) + 1
            if oracle is not None:
                records[cell].append(
                    OutcomeRecord(p, int(bool(oracle(p))), proposal=max(q[idx], 1e-12),
                                  prior=float(prior[idx]))
                )

    testset = TestSet(tuple(points))
    report = check_coverage(testset, spec, abstraction, malfunction_regions)
    if not report.ok:
        bad = {k: v for k, v in report.violations.items() if v}
        raise Infeasible(f"planned set fails coverage self-check: {bad}")
    return testset
