import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wipesim.autonomy import (
    AutonomyConfig,
    AutonomyState,
    autonomy_rate,
    autonomy_step,
    learning_rate,
    power_filter_step,
    stiffness_schedule,
    velocity_gate,
)
from wipesim.geometry import PoseError, Twist

CFG = AutonomyConfig()
ZERO_ERR = PoseError(np.zeros(3), np.zeros(3))
MOVING = Twist(v=np.array([0.25, 0.0, 0.0]))


class TestPowerFilter:
    def test_fixed_point(self):
        assert power_filter_step(1.3, 1.3, 0.5, 0.01) == pytest.approx(1.3)

    def test_step_response_one_time_constant(self):
        xi = 0.0
        dt = 1e-3
        for _ in range(500):  # 0.5 s at tau = 0.5 s
            xi = power_filter_step(xi, 1.0, 0.5, dt)
        assert xi == pytest.approx(1 - math.exp(-1.0), abs=2e-3)

    def test_rejects_high_frequency_chatter(self):
        xi = 0.0
        dt = 1e-3
        worst = 0.0
        for i in range(4000):
            t_dot = math.sin(2 * math.pi * 50.0 * i * dt)  # 50 Hz, 1 W amplitude
            xi = power_filter_step(xi, t_dot, 0.5, dt)
            if i > 2000:
                worst = max(worst, abs(xi))
        assert worst < 0.01


class TestLearningRate:
    @pytest.mark.parametrize("gamma,expected", [(0.0, 1.0), (1.0, 0.0), (0.5, 0.25)])
    def test_values(self, gamma, expected):
        assert learning_rate(gamma) == pytest.approx(expected)

    def test_strictly_decreasing(self):
        gammas = np.linspace(0, 1, 101)
        zetas = [learning_rate(g) for g in gammas]
        assert all(b < a for a, b in zip(zetas, zetas[1:]))


class TestAutonomyStep:
    def test_standstill_gate_blocks_growth(self):
        state = AutonomyState(gamma=0.5, xi=0.0, zeta=0.25)
        out = state
        for _ in range(100):
            out = autonomy_step(out, ZERO_ERR, Twist(), CFG, 0.01)
        assert abs(out.gamma - 0.5) < 1e-3

    def test_gate_attenuation_five_widths_below(self):
        # five 10-90% transition widths below the threshold (clamped at zero
        # speed), the gate leaks less than 1e-3 of the unscaled rate
        width = math.log(81.0) / CFG.gate_steepness
        speed_sq = max(CFG.gate_threshold - 5 * width, 0.0)
        speed = math.sqrt(speed_sq)
        slow = Twist(v=np.array([speed, 0.0, 0.0]))
        state = AutonomyState(gamma=0.5, xi=0.0, zeta=0.25)
        rate = autonomy_rate(state, ZERO_ERR, slow, CFG)
        unscaled = (CFG.rate_min + CFG.rate_gain * 0.5) * 1.0
        assert abs(rate) <= 1e-3 * unscaled

    def test_saturation_at_one(self):
        state = AutonomyState(gamma=1.0, xi=0.0, zeta=0.0)
        out = autonomy_step(state, ZERO_ERR, MOVING, CFG, 0.01)
        assert out.gamma == 1.0
        assert autonomy_rate(state, ZERO_ERR, MOVING, CFG) > 0

    def test_power_injection_demotes_quickly(self):
        # xi = 3 W against threshold 0.8: gamma collapses well within 1.5 s
        state = AutonomyState(gamma=1.0, xi=3.0, zeta=0.0)
        t = 0.0
        while state.gamma > 0.1 and t < 1.5:
            state = autonomy_step(state, ZERO_ERR, MOVING, CFG, 0.01)
            t += 0.01
        assert state.gamma <= 0.1
        assert t < 1.5

    def test_energy_demotion_overrides_good_tracking(self):
        state = AutonomyState(gamma=0.9, xi=CFG.power_threshold + 1.1 / CFG.nu_power, zeta=0.0)
        assert autonomy_rate(state, ZERO_ERR, MOVING, CFG) < 0

    def test_large_tracking_error_blocks_growth(self):
        err = PoseError(np.array([0.2, 0.0, 0.0]), np.zeros(3))
        state = AutonomyState(gamma=0.2, xi=0.0, zeta=0.64)
        assert autonomy_rate(state, err, MOVING, CFG) < 0


class TestSchedules:
    K_MIN = np.array([1.0, 1, 1, 0.001, 0.001, 0.001])
    K_AM = np.array([600.0, 600, 600, 60, 60, 70])
    R_MIN = np.array([0.1, 0.1, 0.1, 0.01, 0.01, 0.01])
    R_AM = np.array([10.0, 10, 1.0, 10, 10, 10])

    def test_fully_compliant_endpoint(self):
        k, r = stiffness_schedule(0.0, self.K_MIN, self.K_AM, self.R_MIN, self.R_AM)
        np.testing.assert_array_equal(k, self.K_MIN)
        np.testing.assert_array_equal(r, self.R_MIN)

    def test_autonomous_endpoint(self):
        k, r = stiffness_schedule(1.0, self.K_MIN, self.K_AM, self.R_MIN, self.R_AM)
        np.testing.assert_array_equal(k, self.K_AM)
        np.testing.assert_array_equal(r, self.R_AM)

    def test_halfway_value(self):
        k, _ = stiffness_schedule(0.5, self.K_MIN, self.K_AM, self.R_MIN, self.R_AM)
        assert k[0] == pytest.approx(1 + 0.25 * 599)
        assert k[0] == pytest.approx(150.75)


@settings(max_examples=300, deadline=None)
@given(
    st.floats(0, 1),
    st.floats(-5, 5),
    st.lists(st.floats(-0.3, 0.3), min_size=6, max_size=6),
    st.lists(st.floats(-1, 1), min_size=6, max_size=6),
)
def test_property_gamma_stays_in_unit_interval(gamma, xi, err, vel):
    state = AutonomyState(gamma=gamma, xi=xi, zeta=learning_rate(gamma))
    e = np.asarray(err)
    v = np.asarray(vel)
    for _ in range(20):
        state = autonomy_step(
            state, PoseError(e[:3], e[3:]), Twist(v[:3], v[3:]), CFG, 0.01
        )
        assert 0.0 <= state.gamma <= 1.0
        assert state.zeta == learning_rate(state.gamma)
