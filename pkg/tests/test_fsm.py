import pytest
from hypothesis import given
from hypothesis import strategies as st

from emrm_vv.errors import InvalidId, UndefinedTransition
from emrm_vv.fsm import (
    EMRM_EVENTS,
    EMRM_FAILURE_STRING,
    EMRM_NO_RISK_STRING,
    EMRM_SUCCESS_STRING,
    Machine,
    TraceStatus,
    build_emrm_machine,
    build_loss_eval_machine,
    coverage,
    reachable,
    recommend_strategy,
    run,
    step,
)


@pytest.fixture
def machine():
    return build_emrm_machine()


def test_machine_shape(machine):
    assert len(machine.states) == 6
    assert len(machine.events) == 8
    assert len(machine.transitions) == 8
    assert machine.initial == "S1"
    assert machine.marked == frozenset({"S6"})


def test_step_follows_table(machine):
    assert step(machine, "S1", "hazard_detected") == "S2"
    assert step(machine, "S2", "no_risk") == "S1"
    assert step(machine, "S4", "timeout_error") == "S5"


def test_step_rejects_unknown_ids(machine):
    with pytest.raises(InvalidId):
        step(machine, "S9", "safe")
    with pytest.raises(InvalidId):
        step(machine, "S1", "warp")


def test_step_undefined_transition(machine):
    with pytest.raises(UndefinedTransition) as err:
        step(machine, "S1", "safe")
    assert err.value.state == "S1"
    assert err.value.event == "safe"


def test_canonical_strings(machine):
    success = run(machine, "S1", EMRM_SUCCESS_STRING)
    assert success.completed and success.end == "S1"
    failure = run(machine, "S1", EMRM_FAILURE_STRING)
    assert failure.completed and failure.end == "S1"
    assert "S6" in failure.visited
    no_risk = run(machine, "S1", EMRM_NO_RISK_STRING)
    assert no_risk.completed and no_risk.end == "S1"


def test_canonical_strings_cover_all_transitions(machine):
    ledger = machine.new_ledger()
    for events in (EMRM_SUCCESS_STRING, EMRM_FAILURE_STRING,
                   EMRM_NO_RISK_STRING):
        run(machine, "S1", events, ledger)
    assert coverage(ledger) == 1.0


def test_run_stops_at_first_undefined(machine):
    trace = run(machine, "S1", ["hazard_detected", "safe", "no_risk"])
    assert trace.status is TraceStatus.UNDEFINED_TRANSITION
    assert trace.failed_index == 1
    assert trace.end == "S2"
    assert trace.consumed == ("hazard_detected",)


def test_empty_string_is_identity(machine):
    for state in machine.states:
        trace = run(machine, state, [])
        assert trace.completed and trace.end == state


def test_all_states_reachable(machine):
    assert reachable(machine, "S1") == machine.states


@given(st.lists(st.sampled_from(EMRM_EVENTS), max_size=12))
def test_run_always_terminates_in_known_state(events):
    machine = build_emrm_machine()
    trace = run(machine, "S1", events)
    assert trace.end in machine.states
    if trace.completed:
        assert len(trace.visited) == len(events) + 1


def test_ledger_merge(machine):
    a = machine.new_ledger()
    b = machine.new_ledger()
    run(machine, "S1", EMRM_SUCCESS_STRING, a)
    run(machine, "S1", EMRM_NO_RISK_STRING, b)
    a.merge(b)
    assert a.hits[("S1", "hazard_detected")] == 2
    assert a.hits[("S2", "no_risk")] == 1


def test_machine_validation():
    with pytest.raises(InvalidId):
        Machine("m", frozenset({"A"}), frozenset({"e"}), {}, initial="B")
    with pytest.raises(InvalidId):
        Machine("m", frozenset({"A"}), frozenset({"e"}),
                {("A", "x"): "A"}, initial="A")


def test_to_table_round_trips_transitions(machine):
    table = machine.to_table()
    for (s, e), t in machine.transitions.items():
        assert f"{s} {e} -> {t}" in table


def test_loss_eval_terminals_are_marked():
    machine = build_loss_eval_machine()
    assert machine.marked == frozenset(
        {"Dodge", "DriftToAvoid", "DriftToAccident", "EmergencyStop"}
    )
    trace = run(machine, "Q", ["Se3", "E0", "C3", "Mi2"])
    assert trace.completed
    assert trace.end == "DriftToAccident"


def test_loss_eval_classifies_every_factor_combination():
    machine = build_loss_eval_machine(wide_passage=True)
    for se in ("Se1", "Se2", "Se3"):
        for e in ("E0", "E1"):
            for c in ("C0", "C1", "C2", "C3"):
                for mi in ("Mi1", "Mi2", "Mi3"):
                    trace = run(machine, "Q", [se, e, c, mi])
                    assert trace.completed
                    assert trace.end == recommend_strategy(se, e, c, mi, True)
                    assert trace.end in machine.marked


def test_narrow_passage_disables_dodge():
    machine = build_loss_eval_machine(wide_passage=False)
    trace = run(machine, "Q", ["Se2", "E0", "C0", "Mi3"])
    # without a wide passage the dodge row falls back to a harder strategy
    assert trace.end != "Dodge"
