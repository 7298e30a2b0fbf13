"""Loss taxonomy, reversibility partition, risk thresholds, and context tuples.

These are the shared vocabulary types: every other module consumes them but
none of them mutates them. All types here are immutable values.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .errors import ContractViolation

DEFAULT_RISK_THRESHOLD = 0.5

_DESCRIPTIONS = {
    0: "Avoid (no loss)",
    1: "Loss of customer satisfaction",
    2: "Loss of or damage to objects outside the vehicle",
    3: "Loss of mission",
    4: "Loss of or damage to vehicle",
    5: "Environmental loss",
    6: "Injury to people",
    7: "Loss of life",
}


@enum.unique
class LossLevel(enum.IntEnum):
    """Ordinal loss severity; L0 encodes the avoided / no-loss outcome."""

    L0 = 0
    L1 = 1
    L2 = 2
    L3 = 3
    L4 = 4
    L5 = 5
    L6 = 6
    L7 = 7

    @property
    def description(self) -> str:
        return _DESCRIPTIONS[int(self)]


class Reversibility(enum.Enum):
    NO_LOSS = "NoLoss"
    REVERSIBLE = "Reversible"
    IRREVERSIBLE = "Irreversible"


def classify_reversibility(level: LossLevel) -> Reversibility:
    """Partition a loss level: L0 no-loss, L1..L5 reversible, L6..L7 irreversible."""
    level = LossLevel(level)
    if level == LossLevel.L0:
        return Reversibility.NO_LOSS
    if level <= LossLevel.L5:
        return Reversibility.REVERSIBLE
    return Reversibility.IRREVERSIBLE


@dataclass(frozen=True)
class RiskAssessment:
    """Per-loss-class risk values paired with their trigger thresholds.

    ``risks[i]`` is the probability that the current hazardous situation
    develops into a loss of class i; ``thresholds[i]`` is the level above
    which class i counts as triggered.
    """

    risks: tuple[float, ...]
    thresholds: tuple[float, ...] = ()

    def __post_init__(self):
        risks = tuple(float(r) for r in self.risks)
        thresholds = tuple(float(t) for t in self.thresholds)
        if not thresholds:
            thresholds = (DEFAULT_RISK_THRESHOLD,) * len(risks)
        if len(thresholds) != len(risks):
            raise ContractViolation("risks and thresholds must have equal length")
        for r in risks:
            if not 0.0 <= r <= 1.0:
                raise ContractViolation(f"risk value {r} outside [0, 1]")
        for t in thresholds:
            if not 0.0 < t < 1.0:
                raise ContractViolation(f"threshold {t} outside (0, 1)")
        object.__setattr__(self, "risks", risks)
        object.__setattr__(self, "thresholds", thresholds)


def exceeds_risk_threshold(assessment: RiskAssessment) -> frozenset[int]:
    """Indices of loss classes whose risk strictly exceeds its threshold."""
    return frozenset(
        i
        for i, (r, t) in enumerate(zip(assessment.risks, assessment.thresholds))
        if r > t
    )


def delta_loss(unmitigated: LossLevel, mitigated: LossLevel) -> int:
    """Ordinal loss reduction achieved by mitigation; avoided outcomes use L0."""
    unmitigated = LossLevel(unmitigated)
    mitigated = LossLevel(mitigated)
    if mitigated > unmitigated:
        raise ContractViolation(
            f"mitigated level {mitigated.name} exceeds unmitigated {unmitigated.name}"
        )
    return int(unmitigated) - int(mitigated)


@dataclass(frozen=True)
class Snapshot:
    """Opaque world-state record: a scene id plus tagged scalar parameters."""

    scene_id: str
    params: tuple[tuple[str, float], ...] = ()

    @classmethod
    def of(cls, scene_id: str, **params: float) -> "Snapshot":
        return cls(scene_id, tuple(sorted(params.items())))

    def get(self, key: str, default: float | None = None) -> float | None:
        for k, v in self.params:
            if k == key:
                return v
        return default


@dataclass(frozen=True)
class Context:
    """History, current, and predicted world-state snapshots."""

    current: Snapshot
    history: tuple[Snapshot, ...] = ()
    predicted: tuple[Snapshot, ...] = ()

    def __post_init__(self):
        if self.current is None:
            raise ContractViolation("context requires a current snapshot")
        object.__setattr__(self, "history", tuple(self.history))
        object.__setattr__(self, "predicted", tuple(self.predicted))
