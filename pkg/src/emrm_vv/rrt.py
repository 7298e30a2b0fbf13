"""Dual-tree kinodynamic RRT over the T-junction scene.

Two trees grow from the same root: a goal-seeking tree toward the
post-junction region, and a fail-safe tree with braking-biased controls
whose terminals are full stops or minimum-momentum contact states. All
edges integrate the bicycle model under the friction circle.
"""

from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass, field

from .errors import InvalidScene, NoContactBranch
from .sim import Scene, VehicleParams, VehicleState, stop_boundary_ttc

_HEADING_WEIGHT = 2.0  # m per rad in the nearest-neighbor metric
_DT = 0.01


class Rejection(enum.Enum):
    FRICTION_EXCEEDED = "FrictionExceeded"
    COLLISION = "Collision"
    OFF_ROAD = "OffRoad"


@dataclass(frozen=True)
class PlannerConfig:
    max_iterations: int = 3000
    extension_step: float = 0.15   # seconds of control per edge
    goal_bias: float = 0.10
    seed: int = 0
    restarts: int = 1
    light: bool = False            # sweep mode: fewer iterations, early exit

    def __post_init__(self):
        if self.max_iterations < 1:
            raise InvalidScene("max_iterations must be >= 1")
        if not 0.0 <= self.goal_bias < 1.0:
            raise InvalidScene("goal bias must lie in [0, 1)")


@dataclass(frozen=True)
class Node:
    state: VehicleState
    parent: int | None
    t: float
    terminal: str | None = None        # "stop" | "contact" | None
    impact_speed: float = 0.0          # m/s, contact terminals only
    impact_angle: float = 0.0          # rad from head-on, contact terminals only


@dataclass
class Tree:
    tag: str
    nodes: list[Node] = field(default_factory=list)

    def add(self, node: Node) -> int:
        self.nodes.append(node)
        return len(self.nodes) - 1

    def path_to(self, index: int) -> tuple[VehicleState, ...]:
        out = []
        while index is not None:
            out.append(self.nodes[index].state)
            index = self.nodes[index].parent
        return tuple(reversed(out))


@dataclass(frozen=True)
class PlanResult:
    avoidance_path: tuple[VehicleState, ...] | None
    failsafe_path: tuple[VehicleState, ...]
    failsafe_kind: str                 # "stop" | "contact"
    goal_tree: Tree
    failsafe_tree: Tree
    label: str                         # coarse mitigability tag G/Y/O


def _geometry(scene: Scene, params: VehicleParams):
    face_x = scene.ego_speed * scene.ttc + params.length / 2.0
    half_w = params.width / 2.0
    y_low = -scene.lane_width / 2.0 + half_w
    # the approach lane itself is always drivable, however narrow the passage
    y_high = max(scene.road_y_high - half_w, 0.0)
    return face_x, half_w, y_low, y_high


def _in_goal(state: VehicleState, scene: Scene, params: VehicleParams) -> bool:
    face_x, half_w, _lo, _hi = _geometry(scene, params)
    clear_y = scene.truck_y_high + half_w + 0.05
    return state.x + params.length / 2.0 >= face_x + 1.0 and state.y >= clear_y


def _nearest(tree: Tree, sample: VehicleState) -> int:
    best, best_d = 0, math.inf
    for i, node in enumerate(tree.nodes):
        if node.terminal is not None:
            continue
        s = node.state
        d = math.hypot(s.x - sample.x, s.y - sample.y) \
            + _HEADING_WEIGHT * abs(s.psi - sample.psi)
        if d < best_d:
            best, best_d = i, d
    return best


def _rollout(state: VehicleState, a_long: float, steer: float,
             scene: Scene, params: VehicleParams, duration: float):
    """Integrate one edge; returns (states, outcome) where outcome is None,
    a Rejection, or a contact tuple ("contact", speed, angle)."""
    face_x, half_w, y_low, y_high = _geometry(scene, params)
    x, y, psi, v = state.x, state.y, state.psi, state.v
    mu_g = params.mu * params.g
    states = []
    steps = max(1, int(duration / _DT))
    for _ in range(steps):
        a_lat = v * v * math.tan(steer) / params.wheelbase
        if math.hypot(a_long, a_lat) > mu_g + 1e-9:
            return states, Rejection.FRICTION_EXCEEDED
        psi += (v / params.wheelbase) * math.tan(steer) * _DT
        x += v * math.cos(psi) * _DT
        y += v * math.sin(psi) * _DT
        v = max(0.0, v + a_long * _DT)
        states.append(VehicleState(x, y, psi, v))
        if not y_low - 0.5 <= y <= y_high + 1e-9:
            return states, Rejection.OFF_ROAD
        front = x + params.length / 2.0
        if front >= face_x:
            clear = (y - half_w) >= scene.truck_y_high + 0.05
            if clear:
                continue  # passing through the side passage
            return states, ("contact", v, abs(psi))
        if v <= 1e-9:
            break
    return states, None


def extend(tree: Tree, sample: VehicleState, scene: Scene,
           params: VehicleParams, config: PlannerConfig,
           braking_bias: bool = False):
    """Steer from the nearest node toward the sample for one extension step.

    Returns the accepted node index, a Rejection value, or a contact node
    index for fail-safe trees (braking_bias) hitting the truck face.
    """
    if not tree.nodes:
        raise InvalidScene("cannot extend an empty tree")
    near_i = _nearest(tree, sample)
    near = tree.nodes[near_i]
    s = near.state
    mu_g = params.mu * params.g
    v = max(s.v, 1.0)

    if braking_bias:
        a_long = -mu_g * 0.95
        avail = math.sqrt(max(0.0, mu_g * mu_g - a_long * a_long))
        lateral_cap = avail
    else:
        a_long = max(-mu_g, min(mu_g, (sample.v - s.v) / config.extension_step))
        lateral_cap = mu_g

    # lateral acceleration the sample demands: close its cross-track offset
    # within the estimated travel time to the sample (floored at a natural
    # maneuver horizon so nearby samples are not judged instantaneously)
    dx = max(sample.x - s.x, 0.5)
    cross = (sample.y - s.y) - dx * math.tan(s.psi)
    t_est = max(math.hypot(dx, sample.y - s.y) / v, 0.7)
    demand = 2.0 * cross / (t_est * t_est)
    if abs(demand) > lateral_cap:
        if not braking_bias:
            return Rejection.FRICTION_EXCEEDED
        demand = math.copysign(lateral_cap, demand)
    steer = math.atan(demand * params.wheelbase / (v * v))
    steer = max(-params.max_steer, min(params.max_steer, steer))
    if not braking_bias:
        a_lat = v * v * abs(math.tan(steer)) / params.wheelbase
        cap = math.sqrt(max(0.0, mu_g * mu_g - a_lat * a_lat))
        a_long = max(-cap, min(cap, a_long))

    states, outcome = _rollout(s, a_long, steer, scene, params, config.extension_step)
    if outcome is Rejection.FRICTION_EXCEEDED or outcome is Rejection.OFF_ROAD:
        return outcome
    if isinstance(outcome, tuple):
        if not braking_bias:
            return Rejection.COLLISION
        _, speed, angle = outcome
        end = states[-1]
        return tree.add(Node(end, near_i, near.t + config.extension_step,
                             terminal="contact", impact_speed=speed,
                             impact_angle=angle))
    if not states:
        return Rejection.COLLISION
    end = states[-1]
    terminal = "stop" if end.v <= 1e-9 else None
    return tree.add(Node(end, near_i, near.t + config.extension_step,
                         terminal=terminal))


def min_momentum_contact(failsafe_tree: Tree) -> tuple[VehicleState, ...]:
    """Contact branch minimizing impact kinetic energy, glancing preferred."""
    contacts = [
        (n.impact_speed, n.impact_angle, i)
        for i, n in enumerate(failsafe_tree.nodes)
        if n.terminal == "contact"
    ]
    if not contacts:
        raise NoContactBranch("every fail-safe branch stops without contact")
    contacts.sort(key=lambda c: (0.5 * c[0] * c[0], c[1], c[2]))
    return failsafe_tree.path_to(contacts[0][2])


def _seed_braking_branch(tree: Tree, scene: Scene, params: VehicleParams,
                         config: PlannerConfig) -> None:
    """Deterministic straight-line full-braking rollout from the root.

    Guarantees the fail-safe tree always holds a terminal branch: a full
    stop whenever the stop boundary allows one, otherwise a head-on contact.
    """
    root = tree.nodes[0].state
    mu_g = params.mu * params.g
    horizon = root.v / mu_g + 1.0
    parent = 0
    t = 0.0
    state = root
    while True:
        states, outcome = _rollout(state, -mu_g, 0.0, scene, params,
                                   config.extension_step)
        t += config.extension_step
        if isinstance(outcome, tuple):
            _, speed, angle = outcome
            tree.add(Node(states[-1], parent, t, terminal="contact",
                          impact_speed=speed, impact_angle=angle))
            return
        if not states:
            return
        state = states[-1]
        terminal = "stop" if state.v <= 1e-9 else None
        parent = tree.add(Node(state, parent, t, terminal=terminal))
        if terminal or t > horizon:
            return


def plan_dual(scene: Scene, params: VehicleParams | None = None,
              config: PlannerConfig | None = None) -> PlanResult:
    """Grow the goal and fail-safe trees; deterministic for a given seed."""
    params = params or VehicleParams()
    config = config or PlannerConfig()
    if scene.ttc <= 0 or scene.ego_speed <= 0:
        raise InvalidScene("scene requires positive speed and TTC")
    face_x, half_w, y_low, y_high = _geometry(scene, params)
    root = Node(VehicleState(0.0, 0.0, 0.0, scene.ego_speed), None, 0.0)
    goal_tree = Tree("goal", [root])
    failsafe_tree = Tree("failsafe", [root])
    rng = random.Random(config.seed)

    _seed_braking_branch(failsafe_tree, scene, params, config)

    iterations = min(config.max_iterations, 150) if config.light \
        else config.max_iterations
    avoidance_index = None
    passage_open = y_high >= scene.truck_y_high + half_w + 0.05

    for _ in range(iterations):
        if avoidance_index is not None and config.light:
            break
        if rng.random() < config.goal_bias:
            clear_lo = max(y_low, scene.truck_y_high + half_w)
            if rng.random() < 0.5:
                sample = VehicleState(
                    face_x + rng.uniform(1.0, scene.junction_clearance),
                    rng.uniform(clear_lo, y_high) if passage_open else 0.0,
                    0.0, scene.ego_speed * rng.uniform(0.3, 1.0),
                )
            else:
                # passage-entry waypoint: already shifted, still before the face
                sample = VehicleState(
                    rng.uniform(0.4 * face_x, 0.95 * face_x),
                    rng.uniform(clear_lo, y_high) if passage_open else 0.0,
                    0.0, scene.ego_speed * rng.uniform(0.5, 1.0),
                )
        else:
            sample = VehicleState(
                rng.uniform(0.0, face_x + scene.junction_clearance),
                rng.uniform(y_low, y_high),
                rng.uniform(-0.4, 0.4),
                rng.uniform(0.0, scene.ego_speed),
            )
        if not passage_open:
            sample = VehicleState(sample.x, 0.0, 0.0, sample.v)
        result = extend(goal_tree, sample, scene, params, config)
        if isinstance(result, int) and avoidance_index is None:
            if _in_goal(goal_tree.nodes[result].state, scene, params):
                avoidance_index = result

        fs_sample = VehicleState(
            rng.uniform(0.0, face_x), rng.uniform(y_low, y_high),
            rng.uniform(-0.2, 0.2), 0.0,
        )
        extend(failsafe_tree, fs_sample, scene, params, config,
               braking_bias=True)

    avoidance = goal_tree.path_to(avoidance_index) \
        if avoidance_index is not None else None

    stops = [i for i, n in enumerate(failsafe_tree.nodes) if n.terminal == "stop"]
    if stops:
        failsafe = failsafe_tree.path_to(stops[0])
        kind = "stop"
    else:
        failsafe = min_momentum_contact(failsafe_tree)
        kind = "contact"

    boundary = stop_boundary_ttc(scene.ego_speed, params.mu, params.g)
    if scene.ttc >= boundary:
        label = "G"
    elif avoidance is not None:
        label = "Y"
    else:
        label = "O"
    return PlanResult(avoidance, failsafe, kind, goal_tree, failsafe_tree, label)
