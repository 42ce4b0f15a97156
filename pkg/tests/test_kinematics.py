import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from highway_dqn.kinematics import (
    KinematicsParams,
    VehicleState,
    integrate_step,
    lane_of,
    relative_state,
    slip_angle,
)

PARAMS = KinematicsParams()


def circle_through(p1, p2, p3):
    (ax, ay), (bx, by), (cx, cy) = p1, p2, p3
    d = 2 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
    ux = ((ax**2 + ay**2) * (by - cy) + (bx**2 + by**2) * (cy - ay) + (cx**2 + cy**2) * (ay - by)) / d
    uy = ((ax**2 + ay**2) * (cx - bx) + (bx**2 + by**2) * (ax - cx) + (cx**2 + cy**2) * (bx - ax)) / d
    return ux, uy


def test_slip_angle_zero():
    assert slip_angle(0.0) == 0.0


def test_slip_angle_matches_high_precision():
    mpmath.mp.dps = 50
    expected = float(mpmath.atan(mpmath.mpf("0.5") * mpmath.tan(mpmath.mpf(0.1))))
    assert slip_angle(0.1) == pytest.approx(expected, rel=1e-15)


def test_slip_angle_domain():
    with pytest.raises(ValueError):
        slip_angle(math.pi / 2)


def test_slip_angle_is_odd(rng):
    d = rng.uniform(-PARAMS.delta_max, PARAMS.delta_max, size=1000)
    for x in d:
        assert slip_angle(-x) == -slip_angle(x)
        assert math.copysign(1, slip_angle(x)) == math.copysign(1, x)


def test_straight_line_step():
    s = integrate_step(VehicleState(x=0, y=0, v=25, phi=0), 0.0, 0.0, PARAMS)
    assert s.x == pytest.approx(2.5, abs=1e-12)
    assert (s.y, s.phi, s.v) == (0.0, 0.0, 25.0)


def test_pure_acceleration():
    s = integrate_step(VehicleState(x=0, y=4, v=25, phi=0, lane=2), 2.0, 0.0, PARAMS)
    assert s.v == pytest.approx(25.2)
    assert (s.y, s.phi) == (4.0, 0.0)


def test_straight_motion_preserves_lateral_state_bitwise():
    s = VehicleState(x=3.0, y=4.0, v=31.7, phi=0.0, lane=2)
    for _ in range(500):
        s = integrate_step(s, 0.0, 0.0, PARAMS)
    assert s.y == 4.0 and s.phi == 0.0 and s.v == 31.7


def test_constant_steer_traces_circle_of_model_radius():
    params = KinematicsParams(dt=1e-3)
    delta = 0.05
    s = VehicleState(x=0.0, y=0.0, v=20.0, phi=0.0)
    path = [(s.x, s.y)]
    while s.phi < math.pi / 2:
        s = integrate_step(s, 0.0, delta, params)
        path.append((s.x, s.y))
    cx, cy = circle_through(path[0], path[len(path) // 2], path[-1])
    radius = max(math.hypot(x - cx, y - cy) for x, y in path)
    expected = params.l / math.sin(slip_angle(delta))
    assert abs(radius - expected) / expected < 0.01


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(-20, 20), st.floats(-0.5, 0.5)), min_size=1, max_size=60),
       st.floats(0, 40))
def test_speed_stays_clamped(controls, v0):
    s = VehicleState(x=0.0, y=4.0, v=v0, lane=2)
    for accel, delta in controls:
        s = integrate_step(s, accel, delta, PARAMS)
        assert PARAMS.v_min <= s.v <= PARAMS.v_max


def test_integrate_is_pure():
    s = VehicleState(x=1.0, y=3.5, v=22.0, phi=0.01, lane=2)
    a = integrate_step(s, 1.3, -0.2, PARAMS)
    b = integrate_step(s, 1.3, -0.2, PARAMS)
    assert a == b
    assert s == VehicleState(x=1.0, y=3.5, v=22.0, phi=0.01, lane=2)


def test_steering_beyond_limit_rejected():
    with pytest.raises(ValueError):
        integrate_step(VehicleState(0, 0, 10), 0.0, 0.6, PARAMS)


def test_lane_tracks_nearest_center():
    s = integrate_step(VehicleState(x=0, y=5.9, v=10, phi=0.3, lane=2), 0.0, 0.0, PARAMS)
    assert s.y > 6.0 and s.lane == 3
    assert [lane_of(y) for y in (-1.9, 1.9, 2.1, 9.9)] == [1, 1, 2, 3]


def test_relative_state_examples():
    ego = VehicleState(x=100, y=4, v=25)
    other = VehicleState(x=120, y=4, v=22)
    assert relative_state(ego, other) == (20, 0, -3)
    assert relative_state(ego, ego) == (0, 0, 0)


@given(st.tuples(*[st.floats(-1e3, 1e3)] * 3), st.tuples(*[st.floats(-1e3, 1e3)] * 3))
def test_relative_state_antisymmetric(a, b):
    sa = VehicleState(x=a[0], y=a[1], v=abs(a[2]))
    sb = VehicleState(x=b[0], y=b[1], v=abs(b[2]))
    assert relative_state(sa, sb) == tuple(-c for c in relative_state(sb, sa))


def test_invalid_geometry_and_params():
    with pytest.raises(ValueError):
        VehicleState(0, 0, 0, length=0)
    with pytest.raises(ValueError):
        KinematicsParams(delta_max=2.0)
    with pytest.raises(ValueError):
        KinematicsParams(v_min=5, v_max=5)
