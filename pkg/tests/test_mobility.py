import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from vefl.errors import PositionOutsideCoverage
from vefl.mobility import (CoverageGeometry, IdmParams, RoadConfig, VehicleState, coverage_boundary_distances,
                           generate_trace, idm_acceleration, sojourn_lower_bound, step_mobility)

GEOM = CoverageGeometry(500.0)


def test_idm_from_rest_is_max_accel():
    p = IdmParams(u_max=20.12, a_max=1.7)
    assert idm_acceleration(0.0, np.inf, 0.0, p) == pytest.approx(1.7)


def test_idm_at_max_speed_is_zero():
    p = IdmParams(u_max=20.12)
    assert idm_acceleration(20.12, np.inf, 0.0, p) == pytest.approx(0.0, abs=1e-12)


def test_idm_hand_evaluation():
    u_max = 20.12
    p = IdmParams(u_max=u_max, a_max=2.0, b_comf=3.0, s_saf=2.0, t_headway=1.5)
    s_star = 2.0 + 10.0 * 1.5
    assert s_star == 17.0
    expected = 2.0 * (1 - (10.0 / u_max) ** 4) - 2.0 * (17.0 / 20.0) ** 2
    assert idm_acceleration(10.0, 20.0, 0.0, p) == pytest.approx(expected, rel=1e-12)


def test_step_empty_fleet():
    assert step_mobility([], IdmParams(u_max=20.0), GEOM, 0.1) == []


def test_step_free_vehicle_at_max_speed():
    v = VehicleState(x=-100.0, y=0.0, speed=20.0)
    step_mobility([v], IdmParams(u_max=20.0), GEOM, 0.1)
    assert v.x == pytest.approx(-98.0)
    assert v.speed == pytest.approx(20.0)


def _idm_rhs(p, lead_speed):
    def f(t, z):
        gap, u = z
        return [lead_speed - u, idm_acceleration(u, gap, u - lead_speed, p)]
    return f


def test_platoon_matches_fine_integration():
    p = IdmParams(u_max=20.0)
    geom = CoverageGeometry(1e6)
    lead = VehicleState(x=30.0, y=0.0, speed=15.0)
    foll = VehicleState(x=0.0, y=0.0, speed=18.0)
    dt, steps = 0.1, 100
    # leader drives at constant speed so the oracle is a 2-state ODE
    lead_speed = 15.0
    p_lead = IdmParams(u_max=lead_speed)
    for _ in range(steps):
        foll.gap_to_leader = lead.x - foll.x
        foll.speed_delta_to_leader = foll.speed - lead.speed
        step_mobility([foll], p, geom, dt)
        step_mobility([lead], p_lead, geom, dt)
    assert lead.speed == pytest.approx(lead_speed)
    t_end = dt * steps
    fine = solve_ivp(_idm_rhs(p, lead_speed), (0, t_end), [30.0, 18.0], max_step=dt / 100, rtol=1e-9, atol=1e-9)
    gap_ref, u_ref = fine.y[:, -1]
    gap = lead.x - foll.x
    assert gap == pytest.approx(gap_ref, rel=0.03)
    assert foll.speed == pytest.approx(u_ref, rel=0.03)
    # the follower settles near the equilibrium gap of the leader's speed
    s_star = p.s_saf + lead_speed * p.t_headway
    assert abs(gap - s_star) < abs(30.0 - s_star)


def test_boundary_distances_center():
    assert coverage_boundary_distances(0.0, 0.0, GEOM) == pytest.approx((500, 500, 500, 500))


def test_boundary_distances_on_axis():
    left, right, down, up = coverage_boundary_distances(300.0, 0.0, GEOM)
    assert (left, right) == pytest.approx((800, 200))
    assert (down, up) == pytest.approx((400, 400))


def test_boundary_distances_pythagorean():
    # boundary x = +-300 at y = 400, boundary y = +-400 at x = 300
    left, right, down, up = coverage_boundary_distances(300.0, 399.999999, GEOM)
    assert sorted([left, right]) == pytest.approx([0.0, 600.0], abs=1e-3)
    assert sorted([down, up]) == pytest.approx([0.0, 800.0], abs=1e-3)


def test_boundary_outside_raises():
    with pytest.raises(PositionOutsideCoverage):
        coverage_boundary_distances(400.0, 400.0, GEOM)


def test_sojourn_examples():
    assert sojourn_lower_bound(0.0, 0.0, 20.12, GEOM) == pytest.approx(500 / 20.12)
    assert sojourn_lower_bound(0.0, 0.0, 20.12, GEOM) == pytest.approx(24.85, abs=0.01)
    assert sojourn_lower_bound(0.0, 0.0, 0.45, GEOM) == pytest.approx(1111.1, abs=0.1)
    assert sojourn_lower_bound(300.0, 400.0 - 1e-12, 20.12, GEOM) == pytest.approx(0.0, abs=1e-6)


def _exit_time(x, y, moves, u_max, r):
    """Walk axis-parallel legs; returns the time the point first reaches the circle."""
    t = 0.0
    for axis, sign, speed, dur in moves:
        step = np.array([1.0, 0.0] if axis == 0 else [0.0, 1.0]) * sign * speed
        # solve |p + step s| = r for s in [0, dur]
        p = np.array([x, y])
        a, b, c = step @ step, 2 * p @ step, p @ p - r * r
        if a > 0:
            s = (-b + math.sqrt(b * b - 4 * a * c)) / (2 * a)
            if s <= dur:
                return t + s
        x, y = p + step * dur
        t += dur
    return math.inf


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 0.999), st.floats(0, 2 * math.pi), st.floats(0.45, 30.0),
       st.lists(st.tuples(st.integers(0, 1), st.sampled_from([-1.0, 1.0]), st.floats(0.0, 1.0),
                          st.floats(0.1, 200.0)), min_size=1, max_size=8))
def test_sojourn_bound_holds_for_axis_parallel_paths(rad, ang, u_max, legs):
    x, y = 500 * rad * math.cos(ang), 500 * rad * math.sin(ang)
    bound = sojourn_lower_bound(x, y, u_max, GEOM)
    moves = [(ax, sg, frac * u_max, d) for ax, sg, frac, d in legs]
    assert _exit_time(x, y, moves, u_max, 500.0) >= bound - 1e-9


def test_sojourn_bound_is_not_a_euclidean_bound():
    # a diagonal path leaves sooner than the axis-parallel bound
    x = y = 300.0
    bound = sojourn_lower_bound(x, y, 1.0, GEOM)
    assert 500 - math.hypot(x, y) < bound


def test_sojourn_holds_on_idm_traces():
    rng = np.random.default_rng(1)
    tr = generate_trace(200.0, RoadConfig(arrival_rate=0.4, initial_vehicles=15), IdmParams(u_max=20.12), GEOM, rng)
    count = 0
    for k in range(0, len(tr.frames), 20):
        for vid, (x, y, _) in tr.frames[k].items():
            if vid in tr.exit_times:
                count += 1
                assert sojourn_lower_bound(x, y, 20.12, GEOM) <= tr.exit_times[vid] - tr.times[k] + 1e-9
    assert count > 50


def test_trace_is_deterministic():
    a = generate_trace(30.0, RoadConfig(), IdmParams(u_max=11.18), GEOM, np.random.default_rng(5))
    b = generate_trace(30.0, RoadConfig(), IdmParams(u_max=11.18), GEOM, np.random.default_rng(5))
    assert a.frames == b.frames
    assert a.exit_times == b.exit_times


def test_speeds_stay_within_limits():
    tr = generate_trace(60.0, RoadConfig(initial_vehicles=25), IdmParams(u_max=20.12), GEOM, np.random.default_rng(2))
    speeds = [s for f in tr.frames for (_, _, s) in f.values()]
    assert min(speeds) >= 0.0
    assert max(speeds) <= 20.12 + 1e-12
