import numpy as np
import pytest
from hypothesis import given, strategies as st

from cavmerge.config import FuelModel, NoiseConfig
from cavmerge.dynamics import actuation_emulation, fuel_over_step, fuel_rate, measure, step_dynamics
from cavmerge.model import Lane, VehicleState


def vs(x, v):
    return VehicleState(0, Lane.MAIN, x, v)


def test_zoh_step():
    s = step_dynamics(vs(0.0, 0.5), 2.0, 0.1, 0.0, 1.0)
    assert s.x == pytest.approx(0.06) and s.v == pytest.approx(0.7) and s.u_held == 2.0


def test_speed_clamp_mid_step():
    s = step_dynamics(vs(0.0, 0.95), 2.0, 0.1, 0.0, 1.0)
    assert s.v == 1.0
    assert s.x == pytest.approx(0.95 * 0.025 + 0.5 * 2 * 0.025 ** 2 + 0.075)
    s = step_dynamics(vs(0.0, 0.05), -2.0, 0.1, 0.0, 1.0)
    assert s.v == 0.0 and s.x == pytest.approx(0.05 * 0.025 - 0.025 ** 2)


def test_rejects_nonpositive_dt():
    with pytest.raises(ValueError):
        step_dynamics(vs(0, 0), 0.0, 0.0)


@given(st.floats(0, 1), st.floats(-2, 2), st.floats(1e-3, 0.5))
def test_step_keeps_speed_in_bounds_and_x_monotone(v, u, dt):
    s = step_dynamics(vs(1.0, v), u, dt, 0.0, 1.0)
    assert 0.0 <= s.v <= 1.0 and s.x >= 1.0 - 1e-15


@given(st.floats(0, 1), st.floats(-2, 2), st.floats(1e-3, 0.2))
def test_two_half_steps_equal_one_step(v, u, dt):
    one = step_dynamics(vs(0.0, v), u, dt, 0.0, 1.0)
    half = step_dynamics(step_dynamics(vs(0.0, v), u, dt / 2, 0.0, 1.0), u, dt / 2, 0.0, 1.0)
    assert one.x == pytest.approx(half.x, abs=1e-12) and one.v == pytest.approx(half.v, abs=1e-12)


def test_noise_bounds_and_mean():
    rng = np.random.default_rng(0)
    noise = NoiseConfig(0.01, 0.005)
    m = [measure(vs(1.0, 0.5), noise, rng) for _ in range(20000)]
    wx = np.array([k.w_x for k in m])
    wv = np.array([k.v - 0.5 for k in m])
    assert np.abs(wx).max() <= 0.01 and np.abs(wv).max() <= 0.005 + 1e-15
    assert abs(wx.mean()) < 3e-4 and abs(wv.mean()) < 1.5e-4


def test_noiseless_measure_is_exact():
    m = measure(vs(1.0, 0.5), NoiseConfig(), np.random.default_rng(0), t=2.0)
    assert (m.x, m.v, m.w_x, m.w_v, m.t_meas) == (1.0, 0.5, 0.0, 0.0, 2.0)


def test_fuel():
    model = FuelModel((1.0, 0.0, 0.0, 0.0), (1.0, 0.0, 0.0))
    assert fuel_rate(0.5, 0.5, model) == pytest.approx(1.5)
    assert fuel_rate(0.5, -5.0, model) == 0.0
    assert fuel_over_step(0.5, 0.0, 0.1, model, 0.0, 1.0) == pytest.approx(0.1)
    # quadratic-in-time rate is integrated exactly by Simpson's rule
    m2 = FuelModel((0.0, 0.0, 1.0, 0.0), (0.0, 0.0, 0.0))
    assert fuel_over_step(0.2, 1.0, 0.5, m2, 0.0, 1.0) == pytest.approx(((0.7 ** 3) - 0.2 ** 3) / 3)


def test_actuation_emulation():
    assert actuation_emulation(0.5, 2.0, 0.05) == pytest.approx(0.6)
    with pytest.raises(ValueError):
        actuation_emulation(0.5, 2.0, 0.0)
