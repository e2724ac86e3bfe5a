import math

import numpy as np
import pytest

from cloudtrack.kinematics import (
    ControlAction,
    FrenetState,
    InvalidStateError,
    PathRangeError,
    Trajectory,
    arc_path,
    cartesian_to_frenet,
    conflict_point,
    crossing_time,
    frenet_to_cartesian,
    rollout,
    step,
    straight_path,
)


def make_traj(s_values, dt, v=None):
    states = []
    for k, s in enumerate(s_values):
        sd = v if v is not None else 0.0
        states.append(FrenetState(s, sd, 0.0, 0.0, t=k * dt))
    return Trajectory(states, dt)


class TestStep:
    def test_hand_evaluated_accel_case(self):
        x = FrenetState(0.0, 3.0, 0.0, 0.0)
        nxt = step(x, ControlAction(1.0, 0.0), 0.1)
        assert nxt.s == pytest.approx(0.305, abs=1e-12)
        assert nxt.s_dot == pytest.approx(3.1, abs=1e-12)
        assert nxt.l == 0.0
        assert nxt.l_dot == 0.0
        assert nxt.t == pytest.approx(0.1)

    def test_zero_input_is_pure_drift(self):
        x = FrenetState(2.0, 1.5, -0.3, 0.2)
        nxt = step(x, ControlAction(0.0, 0.0), 0.1)
        assert nxt.s == pytest.approx(2.0 + 0.1 * 1.5)
        assert nxt.s_dot == pytest.approx(1.5)
        assert nxt.l == pytest.approx(-0.3 + 0.1 * 0.2)
        assert nxt.l_dot == pytest.approx(0.2)

    def test_origin_is_fixed_point(self):
        x = FrenetState(0.0, 0.0, 0.0, 0.0)
        assert step(x, ControlAction(0.0, 0.0), 0.1) == FrenetState(0, 0, 0, 0, 0.1)

    def test_clamping_flagged(self):
        x = FrenetState(0.0, 0.5, 0.0, 0.0)
        nxt = step(x, ControlAction(-10.0, 0.0), 0.5)
        assert nxt.s_dot == 0.0
        assert nxt.clamped
        capped = step(FrenetState(0, 5.0, 0, 0), ControlAction(4.0, 0.0), 1.0, v_max=6.0)
        assert capped.s_dot == 6.0 and capped.clamped

    def test_non_finite_rejected(self):
        with pytest.raises(InvalidStateError):
            step(FrenetState(math.nan, 0, 0, 0), ControlAction(0, 0), 0.1)
        with pytest.raises(InvalidStateError):
            step(FrenetState(0, 0, 0, 0), ControlAction(math.inf, 0), 0.1)

    def test_linearity_before_clamping(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            v1, v2 = rng.normal(size=4), rng.normal(size=4)
            a1, a2 = rng.normal(size=2), rng.normal(size=2)
            # Keep speeds positive so no clamp engages.
            v1[1], v2[1] = abs(v1[1]) + 5, abs(v2[1]) + 5
            x1 = FrenetState(*v1)
            x2 = FrenetState(*v2)
            xs = FrenetState(*(v1 + v2))
            r1 = step(x1, ControlAction(*a1), 0.1).as_vector()
            r2 = step(x2, ControlAction(*a2), 0.1).as_vector()
            rs = step(xs, ControlAction(*(a1 + a2)), 0.1).as_vector()
            assert np.allclose(r1 + r2, rs, atol=1e-12)


class TestRollout:
    def test_constant_velocity_positions(self):
        traj = rollout(FrenetState(0, 3, 0, 0), [ControlAction(0, 0)] * 3, 1.0)
        assert [st.s for st in traj.states] == [0, 3, 6, 9]

    def test_single_action_equals_step(self):
        x0 = FrenetState(1.0, 2.0, 0.5, -0.1)
        a = ControlAction(0.7, -0.2)
        traj = rollout(x0, [a], 0.25)
        assert traj.states[-1] == step(x0, a, 0.25)

    def test_five_accel_steps_final_speed(self):
        traj = rollout(FrenetState(0, 3, 0, 0), [ControlAction(1, 0)] * 5, 0.1)
        assert traj.states[-1].s_dot == pytest.approx(3.5, abs=1e-12)
        assert len(traj) == 6

    def test_replay_is_bit_identical(self):
        rng = np.random.default_rng(3)
        actions = [ControlAction(*rng.normal(size=2)) for _ in range(20)]
        x0 = FrenetState(0.0, 4.0, 0.1, 0.0)
        first = rollout(x0, actions, 0.2)
        second = rollout(x0, actions, 0.2)
        assert first.as_array().tobytes() == second.as_array().tobytes()

    def test_empty_actions_rejected(self):
        with pytest.raises(ValueError):
            rollout(FrenetState(0, 0, 0, 0), [], 0.1)


class TestCrossingTime:
    def test_uniform_motion(self):
        traj = make_traj([0, 3, 6, 9], 1.0, v=3.0)
        assert crossing_time(traj, 6.0) == pytest.approx(2.0)

    def test_linear_interpolation_midpoint(self):
        traj = make_traj([0, 4], 1.0)
        assert crossing_time(traj, 2.0) == pytest.approx(0.5)

    def test_unreachable_point_signals_no_crossing(self):
        traj = make_traj([0, 3, 4.5, 5.0, 5.0], 1.0)
        assert crossing_time(traj, 6.0) is None

    def test_already_past(self):
        traj = make_traj([7, 8], 1.0)
        assert crossing_time(traj, 6.0) == pytest.approx(0.0)

    def test_time_shift_moves_crossing_exactly(self):
        dt = 0.5
        base = [0, 1, 2.5, 4.5, 7.0]
        traj = make_traj(base, dt)
        shifted = Trajectory(
            [FrenetState(x.s, x.s_dot, x.l, x.l_dot, x.t + 3.25) for x in traj.states],
            dt,
        )
        t0 = crossing_time(traj, 3.7)
        t1 = crossing_time(shifted, 3.7)
        assert t1 - t0 == pytest.approx(3.25, abs=1e-12)


class TestTrajectoryValidation:
    def test_irregular_stamps_rejected(self):
        states = [FrenetState(0, 0, 0, 0, 0.0), FrenetState(0, 0, 0, 0, 0.3)]
        with pytest.raises(ValueError):
            Trajectory(states, 0.2)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            Trajectory([], 0.1)


class TestPathGeometry:
    def test_straight_path_identity_on_axis(self):
        path = straight_path((0, 0), 0.0, 20.0)
        (x, y), heading = frenet_to_cartesian(path, FrenetState(5, 0, 0, 0))
        assert (x, y) == pytest.approx((5.0, 0.0))
        assert heading == pytest.approx(0.0)

    def test_straight_path_left_normal_offset(self):
        path = straight_path((0, 0), 0.0, 20.0)
        (x, y), _ = frenet_to_cartesian(path, FrenetState(5, 0, 1.0, 0))
        assert (x, y) == pytest.approx((5.0, 1.0))

    def test_quarter_arc_endpoint_analytic(self):
        # Quarter circle radius 10 starting at angle 0: endpoint (0, 10).
        path = arc_path((0, 0), 10.0, 0.0, math.pi / 2, n_points=181)
        (x, y), _ = frenet_to_cartesian(path, FrenetState(5 * math.pi, 0, 0, 0))
        assert abs(x - 0.0) < 1e-9
        assert abs(y - 10.0) < 1e-9

    def test_out_of_range_s_rejected(self):
        path = straight_path((0, 0), 0.0, 10.0)
        with pytest.raises(PathRangeError):
            frenet_to_cartesian(path, FrenetState(11.0, 0, 0, 0))

    @pytest.mark.parametrize("builder", ["straight", "arc"])
    def test_round_trip_projection(self, builder):
        if builder == "straight":
            path = straight_path((2, -1), 0.7, 30.0)
        else:
            path = arc_path((0, 0), 15.0, -0.3, 1.9, n_points=256)
        rng = np.random.default_rng(11)
        for _ in range(40):
            s = rng.uniform(0.5, path.length - 0.5)
            l = rng.uniform(-1.5, 1.5)
            (x, y), _ = frenet_to_cartesian(path, FrenetState(s, 0, l, 0))
            s2, l2 = cartesian_to_frenet(path, (x, y))
            assert abs(s2 - s) < 1e-6
            assert abs(l2 - l) < 1e-6


class TestConflictPoint:
    def test_perpendicular_crossing(self):
        a = straight_path((0, -10), math.pi / 2, 20.0)  # northbound along x=0
        b = straight_path((-10, 0), 0.0, 20.0)  # eastbound along y=0
        cp = conflict_point(a, b)
        assert cp is not None
        assert cp.position == pytest.approx((0.0, 0.0), abs=1e-12)
        assert cp.s_on_path_a == pytest.approx(10.0)
        assert cp.s_on_path_b == pytest.approx(10.0)

    def test_parallel_paths_have_none(self):
        a = straight_path((0, 0), 0.0, 20.0)
        b = straight_path((0, 3), 0.0, 20.0)
        assert conflict_point(a, b) is None
