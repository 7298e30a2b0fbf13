"""Vehicle dynamics for the T-junction scene.

Closed-form stop/TTC analytics plus a time-stepped maneuver simulator. The
simulator integrates a reduced bicycle model (position, heading, speed) with
strategy-specific acceleration budgets on the friction circle; drift modes
use a sliding model with reduced longitudinal grip.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import yaml

from .errors import (
    ContractViolation,
    DomainError,
    InvalidScene,
    MissingField,
    NegativeGap,
    SchemaError,
    UnstableIntegration,
)
from .hazard import LossLevel

KMH = 1.0 / 3.6  # km/h -> m/s


class Strategy(enum.Enum):
    EMERGENCY_STOP = "EmergencyStop"
    DODGE = "Dodge"
    DRIFT_TO_AVOID = "DriftToAvoid"
    DRIFT_TO_ACCIDENT = "DriftToAccident"


@dataclass(frozen=True)
class VehicleState:
    x: float = 0.0
    y: float = 0.0
    psi: float = 0.0
    v: float = 0.0
    sliding: bool = False

    def __post_init__(self):
        if self.v < 0:
            raise ContractViolation("speed must be non-negative")


@dataclass(frozen=True)
class VehicleParams:
    wheelbase: float = 2.8
    width: float = 1.9
    length: float = 4.8
    max_steer: float = 0.55
    g: float = 9.81
    mu: float = 1.0

    def __post_init__(self):
        for name in ("wheelbase", "width", "length", "max_steer", "g"):
            if getattr(self, name) <= 0:
                raise ContractViolation(f"{name} must be positive")
        if not 0.0 < self.mu <= 1.2:
            raise ContractViolation(f"friction mu {self.mu} outside (0, 1.2]")


@dataclass(frozen=True)
class Scene:
    """T-junction with a truck blocking the approach lane.

    The ego drives along +x at y = 0. The truck's near face sits ahead of
    the ego at a gap implied by the initial TTC; laterally the truck covers
    the band [truck_y_low, truck_y_high], which must overlap the ego lane.
    The open side passage spans from truck_y_high to the road edge.
    """

    scene_id: str
    ego_speed: float          # m/s
    ttc: float                # s, initial gap / ego speed
    passage_width: float      # m
    truck_speed: float = 10.0 * KMH
    truck_y_low: float = -4.0
    truck_y_high: float = -0.15
    lane_width: float = 3.5
    junction_clearance: float = 6.0

    def __post_init__(self):
        if self.passage_width < 0:
            raise InvalidScene("passage width must be non-negative")
        if self.ttc <= 0:
            raise InvalidScene("initial TTC must be positive")
        if self.ego_speed <= 0:
            raise InvalidScene("ego speed must be positive")
        # the truck must actually block the ego lane
        if not (self.truck_y_low < 0.0 and self.truck_y_high > -self.lane_width / 2):
            raise InvalidScene("truck footprint does not intersect the ego lane")

    @property
    def gap(self) -> float:
        """Initial longitudinal gap from ego front to the truck face."""
        return self.ego_speed * self.ttc

    @property
    def road_y_high(self) -> float:
        """Upper drivable edge: truck edge plus the open passage."""
        return self.truck_y_high + self.passage_width


@dataclass(frozen=True)
class SimOutcome:
    collided: bool
    residual_speed: float          # km/h, normal-equivalent; 0 when avoided
    min_ttc: float                 # s
    peak_lateral: float            # m/s^2
    trajectory: tuple[VehicleState, ...]
    loss_level: LossLevel

    def __post_init__(self):
        if not self.collided and self.residual_speed != 0.0:
            raise ContractViolation("avoided outcomes carry zero residual speed")


def stop_boundary_ttc(v: float, mu: float, g: float = 9.81) -> float:
    """Minimum TTC for a full constant-deceleration stop: v / (2 mu g)."""
    if mu <= 0:
        raise DomainError("friction mu must be positive")
    if g <= 0:
        raise DomainError("gravity must be positive")
    if v < 0:
        raise DomainError("speed must be non-negative")
    return v / (2.0 * mu * g)


def time_to_collision(gap: float, closing_speed: float) -> float | None:
    if gap < 0:
        raise NegativeGap(f"gap {gap} is negative")
    if closing_speed <= 0:
        return None
    return gap / closing_speed


# impact thresholds (km/h normal-equivalent residual speed) per target;
# upper-exclusive edges map into increasing loss levels
_IMPACT_BINS = {
    "Truck":   ((1.0, LossLevel.L0), (16.0, LossLevel.L4), (75.0, LossLevel.L6)),
    "Vehicle": ((1.0, LossLevel.L0), (16.0, LossLevel.L4), (60.0, LossLevel.L6)),
    "VRU":     ((1.0, LossLevel.L0), (10.0, LossLevel.L6)),
}
_IMPACT_TOP = LossLevel.L7


def impact_loss_level(residual_kmh: float, target: str = "Truck") -> LossLevel:
    """Energy-based ordinal loss from residual impact speed."""
    if residual_kmh < 0:
        raise DomainError("residual speed must be non-negative")
    try:
        bins = _IMPACT_BINS[target]
    except KeyError:
        raise DomainError(f"unknown impact target {target!r}") from None
    for edge, level in bins:
        if residual_kmh < edge:
            return level
    return _IMPACT_TOP


# strategy budgets: (lateral fraction of mu*g, braking fraction of the
# friction-circle remainder). Drift-to-accident slides: fixed 0.7 mu*g
# longitudinal grip while yawing into a glancing pose.
_LATERAL_CAP = {
    Strategy.EMERGENCY_STOP: 0.0,
    Strategy.DODGE: 0.6,
    Strategy.DRIFT_TO_AVOID: 1.0,
}
_BRAKE_SCALE = {
    Strategy.EMERGENCY_STOP: 1.0,
    Strategy.DODGE: 1.0,
    Strategy.DRIFT_TO_AVOID: 0.7,
}
_SLIDE_BRAKE_FRACTION = 0.7   # longitudinal grip reduced 30% while sliding
_SLIDE_YAW_RATE = 0.6         # rad/s commanded while drifting to accident
_GLANCE_FULL_ANGLE = 0.15     # rad at which glancing attenuation saturates
_GLANCE_FLOOR = 0.48          # residual fraction at a fully glancing pose
_CLEARANCE_MARGIN = 0.35      # m of lateral margin demanded beyond the footprint


def required_lateral_shift(scene: Scene, params: VehicleParams) -> float:
    """Lateral offset the ego center must gain to clear the truck edge."""
    return scene.truck_y_high + params.width / 2.0 + _CLEARANCE_MARGIN


def _glance_attenuation(psi: float) -> float:
    frac = min(1.0, abs(psi) / _GLANCE_FULL_ANGLE)
    return 1.0 - (1.0 - _GLANCE_FLOOR) * frac


def simulate(scene: Scene, strategy: Strategy, params: VehicleParams | None = None,
             dt: float = 0.01, horizon: float = 8.0) -> SimOutcome:
    """Forward-integrate one maneuver strategy against the scene.

    Collision is checked every step: the run ends when the ego front reaches
    the truck face while the footprints still overlap laterally, when the
    ego stops, or when it crosses the face laterally clear.
    """
    if not 0.0 < dt <= 0.05:
        raise ContractViolation(f"dt {dt} outside (0, 0.05]")
    params = params or VehicleParams()
    strategy = Strategy(strategy)
    mu_g = params.mu * params.g
    half_w = params.width / 2.0
    # ego center starts at x = 0, so the truck face sits one half-length
    # beyond the initial gap measured from the ego front
    face_x = scene.gap + params.length / 2.0

    # lateral target: shift enough to clear the truck (small overshoot so the
    # bang-bang law settles on the clear side), clamped to the road
    y_goal = required_lateral_shift(scene, params) + 0.05
    y_limit = scene.road_y_high - half_w
    blocked_passage = y_limit < y_goal

    x, y, psi, v = 0.0, 0.0, 0.0, scene.ego_speed
    sliding = strategy is Strategy.DRIFT_TO_ACCIDENT
    traj = [VehicleState(x, y, psi, v, sliding)]
    min_ttc = scene.ttc
    peak_lat = 0.0
    collided = False
    impact_v = 0.0
    impact_psi = 0.0
    steps = int(horizon / dt)

    for _ in range(steps):
        if sliding:
            # yaw into a glancing pose against the truck, then hold; lateral
            # force is friction-capped and grip is reduced while sliding
            a_lat = -min(v * _SLIDE_YAW_RATE, mu_g) if psi > -0.5 else 0.0
            a_long = _SLIDE_BRAKE_FRACTION * mu_g
        else:
            cap = _LATERAL_CAP[strategy] * mu_g
            a_lat = 0.0
            if cap > 0.0 and not blocked_passage:
                # minimum-time double-integrator law on (y, vy) toward y_goal
                vy = v * math.sin(psi)
                err = y_goal - y
                switch = err - vy * abs(vy) / (2.0 * cap)
                a_lat = cap if switch > 0 else -cap
                if abs(err) < 0.01 and abs(vy) < 0.05:
                    a_lat = 0.0
            a_long = _BRAKE_SCALE[strategy] * math.sqrt(
                max(0.0, mu_g * mu_g - a_lat * a_lat)
            )
        peak_lat = max(peak_lat, abs(a_lat))

        if v > 1e-9:
            psi += (a_lat / max(v, 1.0)) * dt
        x += v * math.cos(psi) * dt
        y += v * math.sin(psi) * dt
        v = max(0.0, v - a_long * dt)
        if abs(psi) > math.pi / 2 or v > 2.0 * scene.ego_speed + 1.0:
            raise UnstableIntegration("state diverged; reduce dt")
        traj.append(VehicleState(x, y, psi, v, sliding))

        front = x + params.length / 2.0
        gap_now = face_x - front
        closing = v * math.cos(psi)
        ttc_now = time_to_collision(max(gap_now, 0.0), closing) if closing > 0 else None
        if ttc_now is not None:
            min_ttc = min(min_ttc, ttc_now)

        if front >= face_x:
            # the full shift, margin included, must be complete at the face
            laterally_clear = (y - half_w) >= scene.truck_y_high + _CLEARANCE_MARGIN
            on_road = (y + half_w) <= scene.road_y_high + 1e-9
            if laterally_clear and on_road:
                break  # passed through the side passage
            collided = True
            impact_v = v
            impact_psi = psi
            break
        if v <= 1e-9:
            break  # full stop short of the obstacle

    if collided:
        residual = impact_v / KMH
        if strategy is Strategy.DRIFT_TO_ACCIDENT:
            residual *= _glance_attenuation(impact_psi)
        min_ttc = 0.0
    else:
        residual = 0.0

    return SimOutcome(
        collided=collided,
        residual_speed=residual,
        min_ttc=min_ttc,
        peak_lateral=peak_lat,
        trajectory=tuple(traj),
        loss_level=impact_loss_level(residual) if collided else LossLevel.L0,
    )


# --- scene files -----------------------------------------------------------

_SCENE_REQUIRED = ("scene_id", "ego_speed_kmh", "ttc_s", "passage_width")
_SCENE_DEFAULTS = {
    "truck_speed_kmh": 10.0,
    "truck_y_low": -4.0,
    "truck_y_high": -0.15,
    "lane_width": 3.5,
    "junction_clearance": 6.0,
}


def scene_from_dict(doc: dict) -> Scene:
    if not isinstance(doc, dict):
        raise SchemaError("scene document must be a mapping")
    for key in _SCENE_REQUIRED:
        if key not in doc:
            raise MissingField(f"scene is missing required field", field=key)
    merged = dict(_SCENE_DEFAULTS)
    merged.update(doc)
    try:
        return Scene(
            scene_id=str(merged["scene_id"]),
            ego_speed=float(merged["ego_speed_kmh"]) * KMH,
            ttc=float(merged["ttc_s"]),
            passage_width=float(merged["passage_width"]),
            truck_speed=float(merged["truck_speed_kmh"]) * KMH,
            truck_y_low=float(merged["truck_y_low"]),
            truck_y_high=float(merged["truck_y_high"]),
            lane_width=float(merged["lane_width"]),
            junction_clearance=float(merged["junction_clearance"]),
        )
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"scene field has wrong type: {exc}") from exc


def scene_to_dict(scene: Scene) -> dict:
    return {
        "scene_id": scene.scene_id,
        "ego_speed_kmh": round(scene.ego_speed / KMH, 9),
        "ttc_s": scene.ttc,
        "passage_width": scene.passage_width,
        "truck_speed_kmh": round(scene.truck_speed / KMH, 9),
        "truck_y_low": scene.truck_y_low,
        "truck_y_high": scene.truck_y_high,
        "lane_width": scene.lane_width,
        "junction_clearance": scene.junction_clearance,
    }


def load_scene(path) -> Scene:
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    return scene_from_dict(doc)


def save_scene(scene: Scene, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(scene_to_dict(scene), fh, sort_keys=False)
