"""Kinematic bicycle model on a straight, flat road.

Positions are in metres with x along the road and y across it (y grows
towards the right-hand lanes). Headings are in radians, zero along +x.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

LANE_WIDTH = 4.0
NUM_LANES = 3
MAX_ACCEL = 5.0


@dataclass(frozen=True, slots=True)
class VehicleState:
    x: float
    y: float
    v: float
    phi: float = 0.0
    length: float = 5.0
    width: float = 2.0
    lane: int = 1

    def __post_init__(self):
        if self.length <= 0 or self.width <= 0:
            raise ValueError("vehicle length and width must be positive")


@dataclass(frozen=True)
class KinematicsParams:
    l: float = 2.5  # centre of mass to each axle
    dt: float = 0.1
    v_min: float = 0.0
    v_max: float = 40.0
    delta_max: float = math.pi / 6

    def __post_init__(self):
        if self.l <= 0 or self.dt <= 0:
            raise ValueError("l and dt must be positive")
        if not 0.0 <= self.v_min < self.v_max:
            raise ValueError("need 0 <= v_min < v_max")
        if not 0.0 < self.delta_max < math.pi / 2:
            raise ValueError("delta_max must lie in (0, pi/2)")


def lane_center(lane: int, lane_width: float = LANE_WIDTH) -> float:
    return (lane - 1) * lane_width


def lane_of(y: float, lane_width: float = LANE_WIDTH, num_lanes: int = NUM_LANES) -> int:
    """Index (1-based) of the lane whose centre is nearest to ``y``."""
    lane = int(math.floor(y / lane_width + 0.5)) + 1
    return min(max(lane, 1), num_lanes)


def slip_angle(delta: float) -> float:
    """Slip angle of the centre of mass for front-wheel angle ``delta``."""
    if not abs(delta) < math.pi / 2:
        raise ValueError(f"front-wheel angle {delta!r} outside (-pi/2, pi/2)")
    return math.atan(0.5 * math.tan(delta))


def integrate_step(state: VehicleState, accel: float, delta: float,
                   params: KinematicsParams) -> VehicleState:
    """Advance ``state`` by one explicit Euler substep of ``params.dt``.

    Position and heading use the speed at the start of the substep; the
    new speed is clamped to ``[v_min, v_max]``. Acceleration is limited to
    +-5 m/s^2 before use.
    """
    if abs(delta) > params.delta_max:
        raise ValueError(f"|delta|={abs(delta)} exceeds delta_max={params.delta_max}")
    accel = min(max(accel, -MAX_ACCEL), MAX_ACCEL)
    beta = slip_angle(delta)
    v, dt = state.v, params.dt
    course = state.phi + beta
    y = state.y + v * math.sin(course) * dt
    return VehicleState(
        x=state.x + v * math.cos(course) * dt,
        y=y,
        v=min(max(v + accel * dt, params.v_min), params.v_max),
        phi=state.phi + (v / params.l) * math.sin(beta) * dt,
        length=state.length,
        width=state.width,
        lane=lane_of(y),
    )


def relative_state(ego: VehicleState, other: VehicleState) -> tuple[float, float, float]:
    """Signed (dx, dy, dv) of ``other`` as seen from ``ego``."""
    return other.x - ego.x, other.y - ego.y, other.v - ego.v
