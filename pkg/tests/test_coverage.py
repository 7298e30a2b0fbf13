import itertools
import math
from statistics import NormalDist

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emrm_vv.coverage import (
    AbstractionMap,
    CoverageSpec,
    FactorDomain,
    OutcomeRecord,
    check_coverage,
)
from emrm_vv.coverage import TestPoint as Point, TestSet as PointSet
from emrm_vv.coverage import (
    generate_covering_array,
    hoeffding_min_samples,
    importance_proposal,
    plan,
    seed_boundaries,
    weighted_success,
    wilson_interval,
)
from emrm_vv.errors import (
    ContractViolation,
    DegeneratePrior,
    DomainError,
    EmptySet,
)


class TestHoeffding:
    def test_examples(self):
        assert hoeffding_min_samples(0.1, 0.05) == 185
        assert hoeffding_min_samples(0.5, 0.05) == 8
        assert hoeffding_min_samples(0.05, 0.05) == 738

    def test_rejects_out_of_range(self):
        with pytest.raises(DomainError):
            hoeffding_min_samples(0.0, 0.05)
        with pytest.raises(DomainError):
            hoeffding_min_samples(0.1, 1.0)

    @given(st.floats(0.01, 0.99), st.floats(0.001, 0.5))
    def test_minimality(self, eps, delta):
        n = hoeffding_min_samples(eps, delta)
        assert 2.0 * math.exp(-2.0 * n * eps * eps) <= delta + 1e-12
        if n > 1:
            assert 2.0 * math.exp(-2.0 * (n - 1) * eps * eps) > delta - 1e-12


class TestWilson:
    def test_examples(self):
        lo, hi = wilson_interval(10, 10)
        assert lo == pytest.approx(0.722, abs=5e-4)
        assert hi == 1.0
        lo, hi = wilson_interval(0, 10)
        assert lo == 0.0
        assert hi == pytest.approx(0.278, abs=5e-4)
        lo, hi = wilson_interval(5, 10)
        assert lo == pytest.approx(0.237, abs=5e-4)
        assert hi == pytest.approx(0.763, abs=5e-4)

    @given(st.integers(1, 200), st.data())
    def test_matches_closed_form(self, n, data):
        s = data.draw(st.integers(0, n))
        lo, hi = wilson_interval(s, n)
        z = NormalDist().inv_cdf(0.975)
        p = s / n
        denom = 1 + z * z / n
        center = (p + z * z / (2 * n)) / denom
        half = (z / denom) * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
        assert lo == pytest.approx(max(0.0, center - half), abs=1e-6)
        assert hi == pytest.approx(min(1.0, center + half), abs=1e-6)

    def test_validates_inputs(self):
        with pytest.raises(DomainError):
            wilson_interval(1, 0)
        with pytest.raises(DomainError):
            wilson_interval(5, 4)


class TestWeightedSuccess:
    def test_unequal_weights_example(self):
        recs = [
            OutcomeRecord(Point((0,)), 1, proposal=0.5, prior=1.0),
            OutcomeRecord(Point((1,)), 0, proposal=1.0, prior=1.0),
        ]
        est = weighted_success(recs)
        assert est.estimate == pytest.approx(2.0 / 3.0)
        assert est.n_eff == pytest.approx(9.0 / 5.0)
        assert est.lo <= est.estimate <= est.hi

    def test_equal_weights_reduce_to_sample_mean(self):
        recs = [OutcomeRecord(Point((i,)), i % 2) for i in range(10)]
        est = weighted_success(recs)
        assert est.estimate == pytest.approx(0.5)
        assert est.n_eff == pytest.approx(10.0)
        lo, hi = wilson_interval(5, 10)
        assert (est.lo, est.hi) == pytest.approx((lo, hi))

    def test_empty_rejected(self):
        with pytest.raises(EmptySet):
            weighted_success([])

    def test_outcome_validated(self):
        with pytest.raises(ContractViolation):
            OutcomeRecord(Point((0,)), 2)
        with pytest.raises(ContractViolation):
            OutcomeRecord(Point((0,)), 1, proposal=0.0)


def _covers(rows, levels, t):
    k = len(levels)
    for fs in itertools.combinations(range(k), t):
        want = set(itertools.product(*(range(levels[j]) for j in fs)))
        got = {tuple(r[j] for j in fs) for r in rows}
        if want - got:
            return False
    return True


class TestCoveringArray:
    def test_three_binary_factors_strength_two(self):
        rows = generate_covering_array([2, 2, 2], 2)
        assert _covers(rows, [2, 2, 2], 2)
        assert len(rows) <= 6

    def test_strength_one_equals_max_levels(self):
        rows = generate_covering_array([4], 1)
        assert len(rows) == 4
        assert _covers(rows, [4], 1)

    def test_four_ternary_factors(self):
        rows = generate_covering_array([3, 3, 3, 3], 2)
        assert _covers(rows, [3, 3, 3, 3], 2)
        assert len(rows) <= 15

    def test_deterministic(self):
        assert (generate_covering_array([3, 3, 2], 2, seed=7)
                == generate_covering_array([3, 3, 2], 2, seed=7))

    def test_rejects_bad_strength(self):
        with pytest.raises(DomainError):
            generate_covering_array([2, 2], 3)

    @settings(max_examples=30, deadline=None)
    @given(
        st.lists(st.integers(2, 4), min_size=2, max_size=4),
        st.integers(2, 3),
        st.integers(0, 3),
    )
    def test_always_covers(self, levels, t, seed):
        t = min(t, len(levels))
        rows = generate_covering_array(levels, t, seed=seed)
        assert _covers(rows, levels, t)


SPEED = FactorDomain("speed", "continuous", 10.0, 70.0,
                     edges=(10.0, 30.0, 50.0, 70.0))
MU = FactorDomain("mu", "categorical", modes=("dry", "wet", "ice"))


class TestDomains:
    def test_level_of_and_representative(self):
        assert SPEED.levels == 3
        assert SPEED.level_of(10.0) == 0
        assert SPEED.level_of(30.0) == 1
        assert SPEED.level_of(70.0) == 2
        assert SPEED.representative(1) == pytest.approx(40.0)
        assert MU.level_of("wet") == 1
        assert MU.representative(2) == "ice"

    def test_out_of_domain(self):
        with pytest.raises(DomainError):
            SPEED.level_of(9.0)
        with pytest.raises(DomainError):
            MU.level_of("snow")

    def test_edges_strictly_increasing(self):
        with pytest.raises(ContractViolation):
            FactorDomain("x", "continuous", 0.0, 1.0, edges=(0.0, 0.5, 0.5))

    def test_seed_boundaries_values(self):
        points = seed_boundaries([SPEED, MU])
        assert len(points) == 4 + 3
        speeds = {p.values[0] for p in points if p.values[1] == "dry"}
        assert {10.0, 30.0, 50.0, 70.0} <= speeds
        assert all(p.provenance == "seeded-boundary" for p in points)


class TestProposal:
    def test_example(self):
        q = importance_proposal((0.8, 0.2))
        assert q[0] == pytest.approx(2.0 / 3.0)
        assert q[1] == pytest.approx(1.0 / 3.0)

    def test_degenerate(self):
        with pytest.raises(DegeneratePrior):
            importance_proposal((0.0, 0.0))

    @given(st.lists(st.floats(0.01, 10.0), min_size=1, max_size=8))
    def test_normalized(self, prior):
        q = importance_proposal(prior)
        assert sum(q) == pytest.approx(1.0)


class TestCheckCoverage:
    def _spec(self, cells, **kw):
        return CoverageSpec(tracked_cells=frozenset(cells), **kw)

    def test_reports_specific_violations(self):
        abstraction = AbstractionMap((SPEED, MU))
        spec = self._spec(itertools.product(range(3), range(3)), n_c=1, n_m=1)
        testset = PointSet((Point((20.0, "dry"), cell=(0, 0)),))
        report = check_coverage(testset, spec, abstraction, {"brake-fade": {}})
        assert not report.ok
        assert ("cell", (2, 2), 0) in report.violations["C1"]
        assert ("boundary", "speed", 70.0) in report.violations["C2"]
        assert report.violations["C3"]
        assert ("malfunction", "brake-fade", 0) in report.violations["C4"]

    def test_passes_on_planned_set(self):
        abstraction = AbstractionMap((SPEED, MU))
        spec = self._spec(itertools.product(range(3), range(3)),
                          n_c=2, epsilon=0.5)
        testset = plan(spec, (SPEED, MU), seed=1)
        report = check_coverage(testset, spec, abstraction)
        assert report.ok


class TestPlan:
    def test_plan_satisfies_constraints_and_counts(self):
        cells = frozenset(itertools.product(range(3), range(3)))
        spec = CoverageSpec(tracked_cells=cells, n_c=1, n_m=2,
                            epsilon=0.5, delta_conf=0.05)
        regions = {"sensor-dropout": {"mu": "ice"}}
        testset = plan(spec, (SPEED, MU), malfunction_regions=regions, seed=3)
        # stub oracle: every tracked cell reaches the Hoeffding count
        target = hoeffding_min_samples(0.5, 0.05)
        counts = {}
        for p in testset:
            counts[p.cell] = counts.get(p.cell, 0) + 1
        for cell in cells:
            assert counts[cell] >= target
        assert sum(1 for p in testset if p.malfunction == "sensor-dropout") >= 2

    def test_plan_with_oracle_stops_on_wilson_width(self):
        cells = frozenset(itertools.product(range(3), range(3)))
        spec = CoverageSpec(tracked_cells=cells, n_c=3, epsilon=0.4)
        testset = plan(spec, (SPEED, MU), oracle=lambda p: True, seed=3)
        assert len(testset) < 200

    def test_plan_deterministic(self):
        cells = frozenset(itertools.product(range(3), range(3)))
        spec = CoverageSpec(tracked_cells=cells, n_c=1, epsilon=0.5)
        a = plan(spec, (SPEED, MU), seed=11)
        b = plan(spec, (SPEED, MU), seed=11)
        assert a == b

    def test_provenance_stages_present(self):
        cells = frozenset(itertools.product(range(3), range(3)))
        spec = CoverageSpec(tracked_cells=cells, n_c=1, n_m=1, epsilon=0.5)
        testset = plan(spec, (SPEED, MU),
                       malfunction_regions={"stuck-throttle": {}}, seed=0)
        stages = {p.provenance for p in testset}
        assert {"seeded-boundary", "covering-array",
                "malfunction", "top-up"} <= stages
