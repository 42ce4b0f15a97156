"""Three-lane highway with scripted, randomly lane-changing traffic.

One call to :meth:`HighwayEnv.step` is a decision step: the ego action and
all traffic lane-change decisions are held for ``substeps`` kinematic
substeps, with collisions checked after each of them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .kinematics import (
    LANE_WIDTH,
    NUM_LANES,
    KinematicsParams,
    VehicleState,
    integrate_step,
    lane_center,
    lane_of,
)


class Action(IntEnum):
    LEFT_LANE = 0
    MAINTAIN = 1
    RIGHT_LANE = 2
    ACCELERATE = 3
    DECELERATE = 4


N_ACTIONS = len(Action)
VEHICLE_LENGTH = 5.0


@dataclass(frozen=True)
class TrafficConfig:
    n_per_lane: int = 4
    spawn_gap_range: tuple[float, float] = (20.0, 60.0)
    traffic_speed_range: tuple[float, float] = (18.0, 24.0)
    lane_change_prob: float = 0.1
    safe_gap_front: float = 15.0
    safe_gap_rear: float = 10.0

    def __post_init__(self):
        if self.n_per_lane < 0:
            raise ValueError("n_per_lane must be >= 0")
        lo, hi = self.spawn_gap_range
        if not 0 < lo <= hi:
            raise ValueError("spawn_gap_range must be positive and ordered")
        lo, hi = self.traffic_speed_range
        if not 0 <= lo <= hi:
            raise ValueError("traffic_speed_range must be non-negative and ordered")
        if not 0.0 <= self.lane_change_prob <= 1.0:
            raise ValueError("lane_change_prob must be a probability")
        if self.safe_gap_front <= 0 or self.safe_gap_rear <= 0:
            raise ValueError("safe gaps must be positive")


@dataclass(frozen=True)
class RewardConfig:
    mode: str = "normalized"  # or "paper_literal"
    collision_penalty: float = -10.0
    v_ref_max: float = 40.0
    v_ref_min: float = 0.0

    def __post_init__(self):
        if self.mode not in ("normalized", "paper_literal"):
            raise ValueError(f"unknown reward mode {self.mode!r}")
        if self.collision_penalty >= 0:
            raise ValueError("collision_penalty must be negative")
        if not self.v_ref_min < self.v_ref_max:
            raise ValueError("need v_ref_min < v_ref_max")


@dataclass(frozen=True)
class EnvConfig:
    horizon: int = 20
    substeps: int = 10
    ego_speed_range: tuple[float, float] = (23.0, 25.0)
    ego_accel: float = 3.0
    traffic_gain: float = 0.5  # 1/s, speed tracking of surrounding vehicles
    hard_brake: float = -5.0
    k_head: float = 1.0
    k_lat: float = 1.0
    lookahead: float = 10.0
    road_bounds: tuple[float, float] = (-2.0, 10.0)
    obs_neighbors: int = 6
    obs_range: float = 100.0
    kinematics: KinematicsParams = field(default_factory=KinematicsParams)
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)

    @property
    def road_width(self) -> float:
        return self.road_bounds[1] - self.road_bounds[0]

    @property
    def obs_dim(self) -> int:
        return 2 + 4 * self.obs_neighbors


@dataclass
class SurroundingVehicle:
    state: VehicleState
    target_speed: float
    target_lane: int

    @property
    def changing_lane(self) -> bool:
        return self.state.lane != self.target_lane


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    done: bool
    info: dict


class ConfigurationError(ValueError):
    pass


def lane_keeping_steer(state: VehicleState, target_lane: int, cfg: EnvConfig) -> float:
    """Two-stage proportional law: lateral error -> heading reference -> steering."""
    error = lane_center(target_lane) - state.y
    heading_ref = math.atan(cfg.k_lat * error / cfg.lookahead)
    dmax = cfg.kinematics.delta_max
    return min(max(cfg.k_head * (heading_ref - state.phi), -dmax), dmax)


def shift_target_lane(action: Action, target_lane: int) -> int:
    if action == Action.LEFT_LANE:
        return max(target_lane - 1, 1)
    if action == Action.RIGHT_LANE:
        return min(target_lane + 1, NUM_LANES)
    return target_lane


def ego_controller(action: Action, ego: VehicleState, target_lane: int,
                   cfg: EnvConfig) -> tuple[float, float]:
    """(accel, delta) for one substep of the ego under ``action``.

    ``target_lane`` must already reflect the action's lane shift (see
    :func:`shift_target_lane`); lane actions at the road edge thus reduce
    to lane keeping.
    """
    if action == Action.ACCELERATE:
        accel = cfg.ego_accel
    elif action == Action.DECELERATE:
        accel = -cfg.ego_accel
    else:
        accel = 0.0
    return accel, lane_keeping_steer(ego, target_lane, cfg)


def _bumper_gap(rear: VehicleState, front: VehicleState) -> float:
    return front.x - rear.x - 0.5 * (front.length + rear.length)


def _occupied_lanes(state: VehicleState, target_lane: int) -> tuple[int, ...]:
    if state.lane == target_lane:
        return (state.lane,)
    return (state.lane, target_lane)


def lane_gaps(me: VehicleState, lane: int,
              others: list[tuple[VehicleState, int]]) -> tuple[float, float]:
    """(front gap, rear gap) in metres around ``me`` within ``lane``.

    ``others`` holds (state, target lane) pairs; a vehicle mid-change is
    counted in both its current and its target lane.
    """
    front = rear = math.inf
    for state, target in others:
        if state is me or lane not in _occupied_lanes(state, target):
            continue
        if state.x >= me.x:
            front = min(front, _bumper_gap(me, state))
        else:
            rear = min(rear, _bumper_gap(state, me))
    return front, rear


def traffic_accel(vehicle: SurroundingVehicle, front_gap: float, cfg: EnvConfig) -> float:
    if front_gap < cfg.traffic.safe_gap_front:
        return cfg.hard_brake
    a = cfg.traffic_gain * (vehicle.target_speed - vehicle.state.v)
    return min(max(a, -cfg.ego_accel), cfg.ego_accel)


def decide_lane_change(vehicle: SurroundingVehicle,
                       others: list[tuple[VehicleState, int]],
                       rng: np.random.Generator, cfg: EnvConfig) -> int | None:
    """Random lane-change decision for one decision step.

    Two uniforms are always drawn so the random stream does not depend on
    the traffic situation. Returns the committed lane or None.
    """
    u_commit, u_side = rng.random(2)
    if vehicle.changing_lane or u_commit >= cfg.traffic.lane_change_prob:
        return None
    lane = vehicle.state.lane
    candidates = [c for c in (lane - 1, lane + 1) if 1 <= c <= NUM_LANES]
    target = candidates[int(u_side * len(candidates))]
    front, rear = lane_gaps(vehicle.state, target, others)
    if front >= cfg.traffic.safe_gap_front and rear >= cfg.traffic.safe_gap_rear:
        return target
    return None


def front_gaps(occupancy: list[tuple[VehicleState, int]]) -> list[float]:
    """Bumper gap to the nearest vehicle ahead in any lane each vehicle occupies."""
    gaps = [math.inf] * len(occupancy)
    for lane in range(1, NUM_LANES + 1):
        members = sorted((state.x, i) for i, (state, target) in enumerate(occupancy)
                         if lane in _occupied_lanes(state, target))
        for (_, i), (_, j) in zip(members, members[1:]):
            gap = _bumper_gap(occupancy[i][0], occupancy[j][0])
            if gap < gaps[i]:
                gaps[i] = gap
    return gaps


def traffic_policy(vehicle: SurroundingVehicle, front_gap: float,
                   cfg: EnvConfig) -> tuple[float, float]:
    """(accel, delta) for one substep of a surrounding vehicle.

    ``front_gap`` is the output of :func:`front_gaps` for this vehicle.
    Lane-change commitments are made separately, once per decision step,
    by :func:`decide_lane_change`.
    """
    return (traffic_accel(vehicle, front_gap, cfg),
            lane_keeping_steer(vehicle.state, vehicle.target_lane, cfg))


def _axes(s: VehicleState):
    c, si = math.cos(s.phi), math.sin(s.phi)
    ax_long = (c, si)
    ax_lat = (-si, c)
    return ax_long, ax_lat


def rectangles_intersect(a: VehicleState, b: VehicleState) -> bool:
    """Separating-axis test for two oriented rectangles.

    Touching rectangles (zero-area contact) do not count as intersecting.
    """
    axes_a = _axes(a)
    axes_b = _axes(b)
    dx, dy = b.x - a.x, b.y - a.y
    ha = (0.5 * a.length, 0.5 * a.width)
    hb = (0.5 * b.length, 0.5 * b.width)
    for axis in axes_a + axes_b:
        ra = sum(h * abs(axis[0] * u[0] + axis[1] * u[1]) for h, u in zip(ha, axes_a))
        rb = sum(h * abs(axis[0] * u[0] + axis[1] * u[1]) for h, u in zip(hb, axes_b))
        if abs(dx * axis[0] + dy * axis[1]) >= ra + rb:
            return False
    return True


def _bounding_radius(s: VehicleState) -> float:
    return 0.5 * math.hypot(s.length, s.width)


def check_collision(ego: VehicleState, others, road_bounds: tuple[float, float]) -> bool:
    """True if the ego overlaps any vehicle in ``others`` or its centre leaves the road."""
    if not road_bounds[0] <= ego.y <= road_bounds[1]:
        return True
    r_ego = _bounding_radius(ego)
    for other in others:
        dx, dy = other.x - ego.x, other.y - ego.y
        reach = r_ego + _bounding_radius(other)
        if dx * dx + dy * dy >= reach * reach:
            continue
        if rectangles_intersect(ego, other):
            return True
    return False


def reward(ego_speed: float, collided: bool, cfg: RewardConfig) -> float:
    if collided:
        return cfg.collision_penalty
    if cfg.mode == "paper_literal":
        return -(ego_speed - cfg.v_ref_max) ** 2
    shortfall = (cfg.v_ref_max - ego_speed) / (cfg.v_ref_max - cfg.v_ref_min)
    return min(max(1.0 - shortfall * shortfall, 0.0), 1.0)


def observe(ego: VehicleState, others: list[VehicleState], cfg: EnvConfig) -> np.ndarray:
    """Fixed-size observation: ego speed/lateral position, then the K nearest
    neighbours by |dx| as [present, dx, dy, dv] blocks, all scaled to [-1, 1]."""
    v_max = cfg.kinematics.v_max
    width = cfg.road_width
    obs = np.zeros(cfg.obs_dim)
    obs[0] = ego.v / v_max
    obs[1] = ego.y / width
    rel = sorted(
        ((o.x - ego.x, o.y - ego.y, o.v - ego.v) for o in others),
        key=lambda r: (abs(r[0]), r[0], r[1], r[2]),
    )
    for k, (dx, dy, dv) in enumerate(rel[: cfg.obs_neighbors]):
        base = 2 + 4 * k
        obs[base: base + 4] = (1.0, dx / cfg.obs_range, dy / width, dv / v_max)
    return np.clip(obs, -1.0, 1.0)


class HighwayEnv:
    """Episodic highway MDP. Single-threaded; owns its random stream."""

    def __init__(self, cfg: EnvConfig | None = None):
        self.cfg = cfg or EnvConfig()
        self.rng = np.random.default_rng(0)
        self.ego: VehicleState | None = None
        self.ego_target_lane = 2
        self.others: list[SurroundingVehicle] = []
        self.step_index = 0
        self.done = True
        self.collided = False
        self.distance = 0.0
        self.speed_sum = 0.0
        self.speed_samples = 0

    @property
    def mean_speed(self) -> float:
        return self.speed_sum / self.speed_samples if self.speed_samples else self.ego.v

    def reset(self, seed: int) -> np.ndarray:
        cfg, tc = self.cfg, self.cfg.traffic
        if tc.n_per_lane and tc.spawn_gap_range[0] <= VEHICLE_LENGTH:
            raise ConfigurationError(
                f"minimum spawn gap {tc.spawn_gap_range[0]} m cannot separate 5 m vehicles")
        self.rng = rng = np.random.default_rng(seed)
        self.ego = VehicleState(x=0.0, y=lane_center(2), v=float(rng.uniform(*cfg.ego_speed_range)),
                                lane=2)
        self.ego_target_lane = 2
        self.others = []
        for lane in range(1, NUM_LANES + 1):
            x = 0.0
            for _ in range(tc.n_per_lane):
                x += float(rng.uniform(*tc.spawn_gap_range))
                speed = float(rng.uniform(*tc.traffic_speed_range))
                state = VehicleState(x=x, y=lane_center(lane), v=speed, lane=lane)
                self.others.append(SurroundingVehicle(state, speed, lane))
        self.step_index = 0
        self.done = False
        self.collided = False
        self.distance = 0.0
        self.speed_sum = 0.0
        self.speed_samples = 0
        return self.observe()

    def observe(self) -> np.ndarray:
        return observe(self.ego, [o.state for o in self.others], self.cfg)

    def _occupancy(self) -> list[tuple[VehicleState, int]]:
        # ego last, so the first len(self.others) entries line up with self.others
        pairs = [(o.state, o.target_lane) for o in self.others]
        pairs.append((self.ego, self.ego_target_lane))
        return pairs

    def step(self, action) -> StepResult:
        if self.done:
            raise RuntimeError("step() called on a finished episode; call reset()")
        cfg = self.cfg
        action = Action(action)
        self.ego_target_lane = shift_target_lane(action, self.ego_target_lane)

        occupancy = self._occupancy()
        for vehicle in self.others:
            target = decide_lane_change(vehicle, occupancy, self.rng, cfg)
            if target is not None:
                vehicle.target_lane = target

        x_start = self.ego.x
        for _ in range(cfg.substeps):
            gaps = front_gaps(self._occupancy())
            controls = [traffic_policy(v, gap, cfg) for v, gap in zip(self.others, gaps)]
            accel, delta = ego_controller(action, self.ego, self.ego_target_lane, cfg)
            self.ego = integrate_step(self.ego, accel, delta, cfg.kinematics)
            for vehicle, (a, d) in zip(self.others, controls):
                vehicle.state = integrate_step(vehicle.state, a, d, cfg.kinematics)
            self.speed_sum += self.ego.v
            self.speed_samples += 1
            if check_collision(self.ego, [v.state for v in self.others], cfg.road_bounds):
                self.collided = True
                break
        self.distance += self.ego.x - x_start
        self.step_index += 1
        r = reward(self.ego.v, self.collided, cfg.reward)
        self.done = self.collided or self.step_index >= cfg.horizon
        info = {"collided": self.collided, "distance_m": self.distance,
                "mean_speed_mps": self.mean_speed}
        return StepResult(self.observe(), r, self.done, info)

    def render_text(self, behind: float = 20.0, ahead: float = 100.0, cell: float = 2.0) -> str:
        """One text line per lane: ``E`` ego, ``o`` traffic, 2 m per column."""
        ncols = int((behind + ahead) / cell)
        rows = [["."] * ncols for _ in range(NUM_LANES)]

        def mark(state: VehicleState, char: str):
            col = int((state.x - self.ego.x + behind) // cell)
            if 0 <= col < ncols:
                rows[state.lane - 1][col] = char

        for o in self.others:
            mark(o.state, "o")
        mark(self.ego, "E")
        return "\n".join("".join(r) for r in rows)
