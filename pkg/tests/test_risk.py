import numpy as np
import pytest

from cloudtrack.kinematics import ConflictPoint, ControlAction, FrenetState, Trajectory
from cloudtrack.risk import (
    RiskParams,
    SignedPet,
    compliance_cost,
    hazard_pet,
    hazard_quadratic,
    is_severe_conflict,
    pet,
    signed_pet,
    smoothness_cost,
    total_utility,
)

ONE = lambda _psi: 1.0  # noqa: E731 - constant density used throughout


def traj_reaching(s_cp, t_cross, dt=0.5, horizon=20.0):
    """Constant-speed trajectory that crosses s_cp exactly at t_cross."""
    v = s_cp / t_cross
    n = int(horizon / dt)
    states = [FrenetState(v * k * dt, v, 0.0, 0.0, t=k * dt) for k in range(n)]
    return Trajectory(states, dt)


def traj_stopping(s_stop, dt=0.5, n=20):
    states = []
    s = 0.0
    for k in range(n):
        states.append(FrenetState(min(s, s_stop), 1.0, 0.0, 0.0, t=k * dt))
        s += 0.6
    return Trajectory(states, dt)


CP = ConflictPoint((0.0, 0.0), s_on_path_a=6.0, s_on_path_b=6.0)


class TestPet:
    def test_hand_computed_gap(self):
        a = traj_reaching(6.0, 5.0)
        b = traj_reaching(6.0, 7.0)
        assert pet(a, b, CP) == pytest.approx(2.0, abs=1e-9)

    def test_simultaneous_arrival(self):
        a = traj_reaching(6.0, 5.0)
        b = traj_reaching(6.0, 5.0)
        assert pet(a, b, CP) == pytest.approx(0.0, abs=1e-12)

    def test_never_crossing_actor_gives_no_conflict(self):
        a = traj_reaching(6.0, 5.0)
        b = traj_stopping(5.0)
        assert pet(a, b, CP) is None

    def test_symmetric_in_actors(self):
        a = traj_reaching(6.0, 4.0)
        b = traj_reaching(6.0, 9.0)
        assert pet(a, b, CP) == pytest.approx(pet(b, a, CP))


class TestSignedPet:
    def test_a_first(self):
        sp = signed_pet(traj_reaching(6.0, 5.0), traj_reaching(6.0, 7.0), CP)
        assert sp.pet == pytest.approx(2.0)
        assert sp.indicator == 1
        assert sp.psi == pytest.approx(2.0)

    def test_b_first(self):
        sp = signed_pet(traj_reaching(6.0, 7.0), traj_reaching(6.0, 5.5), CP)
        assert sp.pet == pytest.approx(1.5)
        assert sp.indicator == -1
        assert sp.psi == pytest.approx(-1.5)

    def test_zero_gap_maps_to_positive_indicator(self):
        sp = signed_pet(traj_reaching(6.0, 5.0), traj_reaching(6.0, 5.0), CP)
        assert sp.indicator == 1
        assert sp.psi == 0.0

    def test_antisymmetric_delta_t(self):
        a, b = traj_reaching(6.0, 4.0), traj_reaching(6.0, 6.5)
        assert signed_pet(a, b, CP).delta_t == pytest.approx(
            -signed_pet(b, a, CP).delta_t
        )


class TestHazard:
    def test_hazard_pet_is_unsigned(self):
        assert hazard_pet(SignedPet(2.0, 1, 2.0, 2.0)) == 2.0
        assert hazard_pet(SignedPet(1.5, -1, -1.5, -1.5)) == 1.5
        assert hazard_pet(SignedPet(0.0, 1, 0.0, 0.0)) == 0.0

    def test_quadratic_at_zero_is_one(self):
        params = RiskParams(m=1.7, n=3.1)
        assert hazard_quadratic(0.0, params, ONE) == pytest.approx(1.0, abs=1e-12)

    def test_quadratic_at_boundary(self):
        params = RiskParams(m=2.3, n=2.3)
        assert hazard_quadratic(2.3, params, ONE) == pytest.approx(2.0, abs=1e-12)

    def test_quadratic_hand_value(self):
        params = RiskParams(m=2.0, n=3.0)
        assert hazard_quadratic(1.0, params, ONE) == pytest.approx(1.0, abs=1e-12)

    def test_vertex_and_minimum_by_dense_sampling(self):
        params = RiskParams(m=2.0, n=3.0)
        psis = np.linspace(-6, 6, 4001)
        vals = [hazard_quadratic(p, params, ONE) for p in psis]
        k = int(np.argmin(vals))
        assert psis[k] == pytest.approx((params.n - params.m) / 2, abs=5e-3)
        expected_min = 1 - (params.m - params.n) ** 2 / (4 * params.m * params.n)
        assert vals[k] == pytest.approx(expected_min, abs=1e-5)

    def test_even_when_m_equals_n(self):
        params = RiskParams(m=2.3, n=2.3)
        for psi in (0.3, 1.1, 2.0, 4.4):
            assert hazard_quadratic(psi, params, ONE) == pytest.approx(
                hazard_quadratic(-psi, params, ONE), abs=1e-12
            )

    def test_root_form_variant(self):
        params = RiskParams(m=2.0, n=3.0, hazard_form="root")
        # (psi - n)(psi + m) / (mn): zero at the boundaries.
        assert hazard_quadratic(3.0, params, ONE) == pytest.approx(0.0, abs=1e-12)
        assert hazard_quadratic(-2.0, params, ONE) == pytest.approx(0.0, abs=1e-12)

    def test_density_weighting(self):
        params = RiskParams(m=2.0, n=2.0)
        assert hazard_quadratic(1.0, params, lambda p: 0.5) == pytest.approx(
            0.5 * hazard_quadratic(1.0, params, ONE)
        )

    def test_non_finite_density_rejected(self):
        with pytest.raises(ValueError):
            hazard_quadratic(1.0, RiskParams(), lambda p: float("nan"))

    def test_vertex_targeting_constructor(self):
        params = RiskParams.for_target_psi(1.2)
        assert (params.n - params.m) / 2 == pytest.approx(1.2)
        floored = RiskParams.for_target_psi(-5.0)
        assert floored.n > 0 and floored.m > 0


class TestCosts:
    def test_smoothness_zero(self):
        assert smoothness_cost([ControlAction(0, 0)] * 4) == 0.0

    def test_smoothness_two_unit_steps(self):
        assert smoothness_cost([ControlAction(1, 1)] * 2) == pytest.approx(4.0)

    def test_smoothness_single_term(self):
        assert smoothness_cost([ControlAction(1.7, 0)]) == pytest.approx(1.7**2)

    def _pair(self, deviation):
        base = FrenetState(1.0, 2.0, 0.0, 0.1, t=0.0)
        dev = FrenetState(
            base.s + deviation[0],
            base.s_dot + deviation[1],
            base.l + deviation[2],
            base.l_dot + deviation[3],
            t=0.0,
        )
        return Trajectory([dev], 0.5), Trajectory([base], 0.5)

    def test_compliance_zero_for_identical(self):
        t, r = self._pair((0, 0, 0, 0))
        assert compliance_cost(t, r, (1, 20, 1, 5)) == 0.0

    def test_compliance_lateral_unit_deviation(self):
        t, r = self._pair((0, 0, 1, 0))
        assert compliance_cost(t, r, (1, 20, 1, 5)) == pytest.approx(1.0, abs=1e-12)

    def test_compliance_speed_unit_deviation(self):
        t, r = self._pair((0, 1, 0, 0))
        assert compliance_cost(t, r, (1, 20, 1, 5)) == pytest.approx(20.0, abs=1e-12)

    def test_compliance_mismatch_rejected(self):
        t, _ = self._pair((0, 0, 0, 0))
        longer = Trajectory(
            [FrenetState(0, 0, 0, 0, 0.0), FrenetState(0, 0, 0, 0, 0.5)], 0.5
        )
        with pytest.raises(ValueError):
            compliance_cost(t, longer, (1, 20, 1, 5))

    def test_compliance_time_shift_invariant(self):
        rng = np.random.default_rng(5)
        vals = rng.normal(size=(4, 4))
        refs = rng.normal(size=(4, 4))
        dt = 0.5
        for shift in (0.0, 7.5):
            t = Trajectory(
                [FrenetState(*vals[k], t=shift + k * dt) for k in range(4)], dt
            )
            r = Trajectory(
                [FrenetState(*refs[k], t=shift + k * dt) for k in range(4)], dt
            )
            if shift == 0.0:
                base = compliance_cost(t, r, (1, 20, 1, 5))
            else:
                assert compliance_cost(t, r, (1, 20, 1, 5)) == pytest.approx(base)


class TestTotalUtility:
    def test_table_weights_sum(self):
        assert total_utility(1, 1, 1, RiskParams()) == pytest.approx(1.0)

    def test_single_attribute(self):
        params = RiskParams(omega_h=1.0, omega_s=0.0, omega_c=0.0)
        assert total_utility(4.2, 0, 0, params) == pytest.approx(4.2)

    def test_all_zero(self):
        assert total_utility(0, 0, 0, RiskParams()) == 0.0

    def test_monotone_in_each_component(self):
        params = RiskParams()
        base = total_utility(1, 1, 1, params)
        assert total_utility(2, 1, 1, params) >= base
        assert total_utility(1, 2, 1, params) >= base
        assert total_utility(1, 1, 2, params) >= base


class TestSevereConflict:
    def test_below_threshold(self):
        assert is_severe_conflict(2.2, RiskParams()) is True

    def test_boundary_is_not_severe(self):
        assert is_severe_conflict(2.3, RiskParams()) is False

    def test_far_safe(self):
        assert is_severe_conflict(10.0, RiskParams()) is False


class TestRiskParamsValidation:
    def test_bad_weights_rejected(self):
        with pytest.raises(ValueError):
            RiskParams(omega_h=0.5, omega_s=0.5, omega_c=0.5)

    def test_bad_boundary_rejected(self):
        with pytest.raises(ValueError):
            RiskParams(m=0.0)

    def test_bad_form_rejected(self):
        with pytest.raises(ValueError):
            RiskParams(hazard_form="cubic")
