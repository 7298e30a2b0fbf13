import pytest
from hypothesis import given
from hypothesis import strategies as st

from emrm_vv.errors import ContractViolation
from emrm_vv.hazard import (
    Context,
    LossLevel,
    Reversibility,
    RiskAssessment,
    Snapshot,
    classify_reversibility,
    delta_loss,
    exceeds_risk_threshold,
)


def test_loss_levels_are_ordered():
    assert LossLevel.L0 < LossLevel.L1 < LossLevel.L7
    assert sorted(LossLevel) == list(LossLevel)


def test_loss_level_descriptions_exist():
    for level in LossLevel:
        assert level.description


def test_reversibility_partition():
    assert classify_reversibility(LossLevel.L0) is Reversibility.NO_LOSS
    for level in (LossLevel.L1, LossLevel.L2, LossLevel.L3,
                  LossLevel.L4, LossLevel.L5):
        assert classify_reversibility(level) is Reversibility.REVERSIBLE
    assert classify_reversibility(LossLevel.L6) is Reversibility.IRREVERSIBLE
    assert classify_reversibility(LossLevel.L7) is Reversibility.IRREVERSIBLE


@given(st.integers(min_value=0, max_value=7))
def test_reversibility_total(level):
    assert classify_reversibility(LossLevel(level)) in Reversibility


def test_threshold_is_strict():
    a = RiskAssessment(risks=(0.5, 0.6), thresholds=(0.5, 0.5))
    assert exceeds_risk_threshold(a) == frozenset({1})


def test_default_thresholds():
    a = RiskAssessment(risks=(0.4, 0.9))
    assert a.thresholds == (0.5, 0.5)
    assert exceeds_risk_threshold(a) == frozenset({1})


def test_risk_bounds_validated():
    with pytest.raises(ContractViolation):
        RiskAssessment(risks=(1.5,))
    with pytest.raises(ContractViolation):
        RiskAssessment(risks=(0.5,), thresholds=(0.0,))
    with pytest.raises(ContractViolation):
        RiskAssessment(risks=(0.5, 0.5), thresholds=(0.5,))


def test_delta_loss_basic():
    assert delta_loss(LossLevel.L7, LossLevel.L6) == 1
    assert delta_loss(LossLevel.L6, LossLevel.L4) == 2
    assert delta_loss(LossLevel.L7, LossLevel.L0) == 7
    assert delta_loss(LossLevel.L3, LossLevel.L3) == 0


def test_delta_loss_rejects_worsening():
    with pytest.raises(ContractViolation):
        delta_loss(LossLevel.L4, LossLevel.L6)


@given(st.integers(0, 7), st.integers(0, 7))
def test_delta_loss_bounds(a, b):
    lo, hi = sorted((a, b))
    assert 0 <= delta_loss(LossLevel(hi), LossLevel(lo)) <= 7


def test_snapshot_params():
    s = Snapshot.of("t_junction", speed=13.9, ttc=1.0)
    assert s.get("speed") == 13.9
    assert s.get("missing") is None
    assert s.get("missing", 0.0) == 0.0
    # params are sorted, so construction order does not matter
    assert s == Snapshot.of("t_junction", ttc=1.0, speed=13.9)


def test_context_requires_current():
    with pytest.raises(ContractViolation):
        Context(current=None)
    ctx = Context(current=Snapshot.of("t_junction"),
                  history=[Snapshot.of("t_junction")])
    assert isinstance(ctx.history, tuple)
