"""Deterministic finite-state machines with marked states and coverage ledgers.

Ships the two built-in machines used throughout the toolkit: the evasive
maneuver supervisor (six states S1..S6) and the layered loss-evaluation
classifier that recommends a mitigation strategy.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field

from .errors import InvalidId, UndefinedTransition


class TraceStatus(enum.Enum):
    COMPLETED = "Completed"
    UNDEFINED_TRANSITION = "UndefinedTransition"


@dataclass(frozen=True)
class Trace:
    visited: tuple[str, ...]
    consumed: tuple[str, ...]
    status: TraceStatus
    failed_index: int | None = None

    @property
    def end(self) -> str:
        return self.visited[-1]

    @property
    def completed(self) -> bool:
        return self.status is TraceStatus.COMPLETED


class CoverageLedger:
    """Per-transition hit counters for one machine.

    Keys are exactly the machine's defined (state, event) pairs; counters
    merge across parallel runs by addition.
    """

    def __init__(self, machine: "Machine"):
        self.machine = machine
        self.hits: dict[tuple[str, str], int] = {
            key: 0 for key in machine.transitions
        }

    def record(self, state: str, event: str) -> None:
        self.hits[(state, event)] += 1

    def merge(self, other: "CoverageLedger") -> None:
        if other.machine is not self.machine and other.machine != self.machine:
            raise InvalidId("cannot merge ledgers of different machines")
        for key, n in other.hits.items():
            self.hits[key] += n


def coverage(ledger: CoverageLedger) -> float:
    """Fraction of defined transitions hit at least once."""
    total = len(ledger.hits)
    if total == 0:
        return 0.0
    return sum(1 for n in ledger.hits.values() if n >= 1) / total


@dataclass(frozen=True)
class Machine:
    """Deterministic FSM: at most one successor per (state, event)."""

    name: str
    states: frozenset[str]
    events: frozenset[str]
    transitions: dict[tuple[str, str], str]
    initial: str
    marked: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.initial not in self.states:
            raise InvalidId(f"initial state {self.initial!r} not in state set")
        if not self.marked <= self.states:
            raise InvalidId("marked set is not a subset of the state set")
        for (s, e), t in self.transitions.items():
            if s not in self.states or t not in self.states:
                raise InvalidId(f"transition ({s}, {e}) -> {t} uses unknown state")
            if e not in self.events:
                raise InvalidId(f"transition ({s}, {e}) uses unknown event")

    def new_ledger(self) -> CoverageLedger:
        return CoverageLedger(self)

    def to_table(self) -> str:
        """Plain-text transition table, one `state event -> state` per line."""
        lines = [f"# machine {self.name}", f"# initial {self.initial}"]
        if self.marked:
            lines.append(f"# marked {' '.join(sorted(self.marked))}")
        for (s, e), t in sorted(self.transitions.items()):
            lines.append(f"{s} {e} -> {t}")
        return "\n".join(lines) + "\n"


def step(
    machine: Machine,
    state: str,
    event: str,
    ledger: CoverageLedger | None = None,
) -> str:
    if state not in machine.states:
        raise InvalidId(f"unknown state {state!r}")
    if event not in machine.events:
        raise InvalidId(f"unknown event {event!r}")
    try:
        target = machine.transitions[(state, event)]
    except KeyError:
        raise UndefinedTransition(state, event) from None
    if ledger is not None:
        ledger.record(state, event)
    return target


def run(
    machine: Machine,
    start: str,
    events: list[str] | tuple[str, ...],
    ledger: CoverageLedger | None = None,
) -> Trace:
    """Apply events left to right; the empty string is the identity."""
    if start not in machine.states:
        raise InvalidId(f"unknown state {start!r}")
    visited = [start]
    consumed: list[str] = []
    for i, event in enumerate(events):
        try:
            nxt = step(machine, visited[-1], event, ledger)
        except UndefinedTransition:
            return Trace(
                tuple(visited), tuple(consumed),
                TraceStatus.UNDEFINED_TRANSITION, failed_index=i,
            )
        visited.append(nxt)
        consumed.append(event)
    return Trace(tuple(visited), tuple(consumed), TraceStatus.COMPLETED)


def reachable(machine: Machine, start: str) -> frozenset[str]:
    """Breadth-first closure over defined transitions."""
    if start not in machine.states:
        raise InvalidId(f"unknown state {start!r}")
    seen = {start}
    queue = deque([start])
    succ: dict[str, list[str]] = {}
    for (s, _e), t in machine.transitions.items():
        succ.setdefault(s, []).append(t)
    while queue:
        s = queue.popleft()
        for t in succ.get(s, ()):
            if t not in seen:
                seen.add(t)
                queue.append(t)
    return frozenset(seen)


# --- built-in machine: evasive maneuver supervisor ------------------------

EMRM_STATES = ("S1", "S2", "S3", "S4", "S5", "S6")
EMRM_EVENTS = (
    "hazard_detected",
    "no_risk",
    "high_risk",
    "execute_maneuver",
    "EMRM_done",
    "timeout_error",
    "post_incident_response",
    "safe",
)

EMRM_SUCCESS_STRING = ("hazard_detected", "high_risk", "execute_maneuver", "EMRM_done")
EMRM_FAILURE_STRING = (
    "hazard_detected", "high_risk", "execute_maneuver",
    "timeout_error", "post_incident_response", "safe",
)
EMRM_NO_RISK_STRING = ("hazard_detected", "no_risk")


def build_emrm_machine() -> Machine:
    """Six-state supervisor: hazard detection, escalation, maneuver, recovery."""
    transitions = {
        ("S1", "hazard_detected"): "S2",
        ("S2", "no_risk"): "S1",
        ("S2", "high_risk"): "S3",
        ("S3", "execute_maneuver"): "S4",
        ("S4", "EMRM_done"): "S1",
        ("S4", "timeout_error"): "S5",
        ("S5", "post_incident_response"): "S6",
        ("S6", "safe"): "S1",
    }
    return Machine(
        name="emrm",
        states=frozenset(EMRM_STATES),
        events=frozenset(EMRM_EVENTS),
        transitions=transitions,
        initial="S1",
        marked=frozenset({"S6"}),
    )


# --- built-in machine: layered loss-evaluation classifier -----------------

SEVERITY_EVENTS = ("Se1", "Se2", "Se3")          # marginal / critical / catastrophic
EXPOSURE_EVENTS = ("E0", "E1")                   # low / very low
CONTROLLABILITY_EVENTS = ("C0", "C1", "C2", "C3")  # high .. very low
MANEUVERABILITY_EVENTS = ("Mi1", "Mi2", "Mi3")   # low / medium / high

STRATEGY_STATES = ("Dodge", "DriftToAvoid", "DriftToAccident", "EmergencyStop")


def recommend_strategy(se: str, e: str, c: str, mi: str,
                       wide_passage: bool = True) -> str:
    """Decision table behind the loss-evaluation machine.

    Rules apply in priority order; anything not matched falls through to
    emergency stop. The table is deliberately overridable: pass a different
    table to ``build_loss_eval_machine`` to replace it wholesale.
    """
    if se == "Se3" and c in ("C2", "C3"):
        return "DriftToAccident"
    if se in ("Se2", "Se3") and c in ("C0", "C1") and mi in ("Mi2", "Mi3"):
        return "DriftToAvoid"
    if se == "Se2" and mi == "Mi3" and wide_passage:
        return "Dodge"
    return "EmergencyStop"


def build_loss_eval_machine(wide_passage: bool = True,
                            table=None) -> Machine:
    """Layered classifier consuming [severity, exposure, controllability,
    maneuverability] in that order and terminating in a strategy state."""
    table = table or (lambda se, e, c, mi: recommend_strategy(se, e, c, mi, wide_passage))
    states = {"Q"}
    transitions: dict[tuple[str, str], str] = {}
    for se in SEVERITY_EVENTS:
        s1 = f"Q.{se}"
        states.add(s1)
        transitions[("Q", se)] = s1
        for e in EXPOSURE_EVENTS:
            s2 = f"{s1}.{e}"
            states.add(s2)
            transitions[(s1, e)] = s2
            for c in CONTROLLABILITY_EVENTS:
                s3 = f"{s2}.{c}"
                states.add(s3)
                transitions[(s2, c)] = s3
                for mi in MANEUVERABILITY_EVENTS:
                    transitions[(s3, mi)] = table(se, e, c, mi)
    states.update(STRATEGY_STATES)
    events = frozenset(
        SEVERITY_EVENTS + EXPOSURE_EVENTS
        + CONTROLLABILITY_EVENTS + MANEUVERABILITY_EVENTS
    )
    return Machine(
        name="loss-eval",
        states=frozenset(states),
        events=events,
        transitions=transitions,
        initial="Q",
        marked=frozenset(STRATEGY_STATES),
    )


BUILTIN_MACHINES = {
    "emrm": build_emrm_machine,
    "loss-eval": build_loss_eval_machine,
}
