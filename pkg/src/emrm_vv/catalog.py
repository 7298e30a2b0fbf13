"""HARA/STPA catalog: hazardous-scenario rows, UCA modes, and trace links.

The builtin catalog is loaded from an embedded YAML document; the same
schema loads from external files via ``load_catalog`` (CLI ``--catalog``).
Every UCA carries a machine-checkable link to the FSM transitions its
malfunction exercises (or, for the not-providing mode, the transition whose
absence is the malfunction).
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import yaml

from .errors import DataCorrupt, UnknownScene, UnknownUCA
from .fsm import build_emrm_machine
from .hazard import Context, LossLevel, RiskAssessment

UCA_IDS = ("UCA1", "UCA2", "UCA3", "UCA4")
UCA_MODES = {
    "UCA1": "NotProviding",
    "UCA2": "ProvidingUnneeded",
    "UCA3": "WrongTiming",
    "UCA4": "WrongDuration",
}

_RATING_RANGES = {
    "maneuverability": {"M1", "M2", "M3"},
    "avoidability": {"A1", "A2", "A3"},
    "mitigability": {"M1", "M2", "M3"},
}


@dataclass(frozen=True)
class HazardEntry:
    hazard: str
    loss: str
    description: str
    maneuverability: str
    avoidability: str
    mitigability: str
    smil: str          # opaque grade, stored verbatim
    risk: float


@dataclass(frozen=True)
class UCAEntry:
    uca: str
    mode: str
    description: str
    hazards: frozenset[str]
    losses: frozenset[LossLevel]


@dataclass(frozen=True)
class TraceLink:
    uca: str
    machine: str
    mode: str  # "exercised" | "required_missing"
    transitions: tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class IntegrationRecord:
    hazards: frozenset[str]
    losses: frozenset[LossLevel]
    risk: RiskAssessment


@dataclass(frozen=True)
class Catalog:
    hazards: tuple[HazardEntry, ...]
    ucas: tuple[UCAEntry, ...]
    trace_links: tuple[TraceLink, ...]
    scenes: dict[str, dict]

    def hazard(self, hid: str) -> HazardEntry:
        for h in self.hazards:
            if h.hazard == hid:
                return h
        raise DataCorrupt(f"hazard {hid!r} not in catalog")

    def uca(self, uid: str) -> UCAEntry:
        for u in self.ucas:
            if u.uca == uid:
                return u
        raise UnknownUCA(f"unknown UCA id {uid!r}")

    def to_yaml(self) -> str:
        doc = {
            "schema": "emrm-vv-catalog/1",
            "scenes": self.scenes,
            "hazards": [
                {
                    "hazard": h.hazard, "loss": h.loss,
                    "description": h.description,
                    "maneuverability": h.maneuverability,
                    "avoidability": h.avoidability,
                    "mitigability": h.mitigability,
                    "smil": h.smil, "risk": h.risk,
                }
                for h in self.hazards
            ],
            "ucas": [
                {
                    "uca": u.uca, "mode": u.mode, "description": u.description,
                    "hazards": sorted(u.hazards),
                    "losses": [lv.name for lv in sorted(u.losses)],
                }
                for u in self.ucas
            ],
            "trace_links": [
                {
                    "uca": t.uca, "machine": t.machine, "mode": t.mode,
                    "transitions": [list(tr) for tr in t.transitions],
                }
                for t in self.trace_links
            ],
        }
        return yaml.safe_dump(doc, sort_keys=False)


def _require(row: dict, key: str, row_name: str):
    if key not in row:
        raise DataCorrupt(f"catalog row {row_name}: missing field '{key}'")
    return row[key]


def _parse_catalog(doc: dict) -> Catalog:
    if not isinstance(doc, dict) or doc.get("schema") != "emrm-vv-catalog/1":
        raise DataCorrupt("catalog document missing schema tag 'emrm-vv-catalog/1'")
    hazards = []
    for row in doc.get("hazards", []):
        name = row.get("hazard", "<unnamed>")
        entry = HazardEntry(
            hazard=_require(row, "hazard", name),
            loss=_require(row, "loss", name),
            description=str(_require(row, "description", name)).strip(),
            maneuverability=_require(row, "maneuverability", name),
            avoidability=_require(row, "avoidability", name),
            mitigability=_require(row, "mitigability", name),
            smil=str(_require(row, "smil", name)),
            risk=float(row.get("risk", 0.5)),
        )
        for field_name, allowed in _RATING_RANGES.items():
            if getattr(entry, field_name) not in allowed:
                raise DataCorrupt(
                    f"catalog row {name}: field '{field_name}' value "
                    f"{getattr(entry, field_name)!r} outside {sorted(allowed)}"
                )
        hazards.append(entry)
    ucas = []
    for row in doc.get("ucas", []):
        name = row.get("uca", "<unnamed>")
        entry = UCAEntry(
            uca=_require(row, "uca", name),
            mode=_require(row, "mode", name),
            description=str(_require(row, "description", name)).strip(),
            hazards=frozenset(_require(row, "hazards", name)),
            losses=frozenset(LossLevel[x] for x in _require(row, "losses", name)),
        )
        if not entry.hazards or not entry.losses:
            raise DataCorrupt(f"catalog row {name}: needs >=1 hazard and >=1 loss")
        ucas.append(entry)
    links = []
    for row in doc.get("trace_links", []):
        name = row.get("uca", "<unnamed>")
        links.append(
            TraceLink(
                uca=_require(row, "uca", name),
                machine=row.get("machine", "emrm"),
                mode=row.get("mode", "exercised"),
                transitions=tuple(
                    (s, e) for s, e in _require(row, "transitions", name)
                ),
            )
        )
    catalog = Catalog(
        hazards=tuple(hazards),
        ucas=tuple(ucas),
        trace_links=tuple(links),
        scenes=dict(doc.get("scenes", {})),
    )
    _validate(catalog)
    return catalog


def _validate(catalog: Catalog) -> None:
    known_hazards = {h.hazard for h in catalog.hazards}
    for u in catalog.ucas:
        if not u.hazards <= known_hazards:
            raise DataCorrupt(
                f"UCA {u.uca} references unknown hazards {sorted(u.hazards - known_hazards)}"
            )
    machine = build_emrm_machine()
    uca_ids = {u.uca for u in catalog.ucas}
    for link in catalog.trace_links:
        if link.uca not in uca_ids:
            raise DataCorrupt(f"trace link references unknown UCA {link.uca!r}")
        if link.machine == "emrm":
            for s, e in link.transitions:
                if (s, e) not in machine.transitions:
                    raise DataCorrupt(
                        f"trace link {link.uca}: transition ({s}, {e}) "
                        f"not defined in machine 'emrm'"
                    )


def builtin_catalog() -> Catalog:
    """Catalog embedded in the package: 8 hazard rows, 4 UCAs, 4 trace links."""
    text = resources.files("emrm_vv.data").joinpath("catalog.yaml").read_text()
    return _parse_catalog(yaml.safe_load(text))


def load_catalog(path) -> Catalog:
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    return _parse_catalog(doc)


def integrate(context: Context, ucas, catalog: Catalog | None = None,
              thresholds: tuple[float, ...] | None = None) -> IntegrationRecord:
    """Union of hazards, losses, and risk reachable from the UCAs in scene context.

    Risk values come from catalog hazard rows (indexed by loss-class ordinal
    1..7); classes not implicated carry zero risk.
    """
    catalog = catalog or builtin_catalog()
    scene_id = context.current.scene_id
    if scene_id not in catalog.scenes:
        raise UnknownScene(f"scene {scene_id!r} not in catalog")
    scene_hazards = set(catalog.scenes[scene_id].get("hazards", []))
    hazards: set[str] = set()
    losses: set[LossLevel] = set()
    for uid in ucas:
        entry = catalog.uca(uid)
        hazards |= entry.hazards & scene_hazards if scene_hazards else set(entry.hazards)
        losses |= entry.losses
    risks = [0.0] * 8
    for hid in hazards:
        row = catalog.hazard(hid)
        for lv in losses:
            risks[int(lv)] = max(risks[int(lv)], row.risk)
    thr = thresholds or ()
    record = IntegrationRecord(
        hazards=frozenset(hazards),
        losses=frozenset(losses),
        risk=RiskAssessment(tuple(risks), thr),
    )
    if record.hazards and not record.losses:
        raise DataCorrupt("integration produced hazards without losses")
    return record


def trace(uca: str, catalog: Catalog | None = None) -> TraceLink:
    """Trace link for one UCA: the FSM transitions its malfunction exercises."""
    catalog = catalog or builtin_catalog()
    catalog.uca(uca)  # raises UnknownUCA
    for link in catalog.trace_links:
        if link.uca == uca:
            return link
    raise UnknownUCA(f"no trace link for {uca!r}")
