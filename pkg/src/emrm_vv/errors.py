"""Exception types shared across the toolkit."""


class EmrmVvError(Exception):
    """Base class for all toolkit errors."""


class ContractViolation(EmrmVvError):
    """A documented precondition was violated by the caller."""


class DomainError(EmrmVvError):
    """Numeric input outside the mathematically valid domain."""


class InvalidId(EmrmVvError):
    """Unknown state or event id passed to an FSM operation."""


class UndefinedTransition(EmrmVvError):
    """The transition function is not defined at (state, event)."""

    def __init__(self, state, event):
        super().__init__(f"no transition defined at ({state}, {event})")
        self.state = state
        self.event = event


class UnknownScene(EmrmVvError):
    """Scene id not present in the catalog."""


class UnknownUCA(EmrmVvError):
    """UCA id not present in the catalog."""


class DataCorrupt(EmrmVvError):
    """Embedded or external catalog data failed validation."""


class EmptySet(EmrmVvError):
    """An operation requiring a non-empty collection got an empty one."""


class EmptyDomain(EmrmVvError):
    """No factor domains were supplied."""


class DegeneratePrior(EmrmVvError):
    """Exposure prior carries no mass."""


class Infeasible(EmrmVvError):
    """A tracked cell cannot receive any admissible test point."""


class SchemaError(EmrmVvError):
    """A structured document failed schema validation."""

    def __init__(self, message, field=None, line=None):
        ctx = []
        if field is not None:
            ctx.append(f"field '{field}'")
        if line is not None:
            ctx.append(f"line {line}")
        suffix = f" ({', '.join(ctx)})" if ctx else ""
        super().__init__(message + suffix)
        self.field = field
        self.line = line


class MissingField(SchemaError):
    """A required field is absent from a structured document."""


class NegativeGap(EmrmVvError):
    """Gap distances must be non-negative."""


class UnstableIntegration(EmrmVvError):
    """Time-stepped integration diverged (dt too large)."""


class InvalidScene(EmrmVvError):
    """Scene fails its structural invariants."""


class NoContactBranch(EmrmVvError):
    """Fail-safe tree has no contact-terminal branch."""


class IncompleteGrid(EmrmVvError):
    """KPI computation requires a fully simulated grid."""


class IoError(EmrmVvError):
    """Artifact emission failed; message carries the path."""
