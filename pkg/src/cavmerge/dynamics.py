"""Longitudinal double-integrator dynamics, sensing and energy bookkeeping."""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from .config import FuelModel, NoiseConfig
from .model import MeasuredState, VehicleState


def _saturation_time(v: float, u: float, v_min: float, v_max: float) -> float:
    """Time until speed hits a bound under constant u (inf if never)."""
    if u > 0.0:
        return max(v_max - v, 0.0) / u
    if u < 0.0:
        return max(v - v_min, 0.0) / -u
    return np.inf


def speed_at(v: float, u: float, tau: float, v_min: float, v_max: float) -> float:
    return min(max(v + u * tau, v_min), v_max)


def step_dynamics(state: VehicleState, u: float, dt: float, v_min: float = 0.0,
                  v_max: float = np.inf) -> VehicleState:
    """Exact zero-order-hold update; speed saturates at its bounds mid-step."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    v = min(max(state.v, v_min), v_max)
    ts = _saturation_time(v, u, v_min, v_max)
    if ts >= dt:
        x = state.x + v * dt + 0.5 * u * dt * dt
        v_new = v + u * dt
    else:
        v_sat = v_max if u > 0 else v_min
        x = state.x + v * ts + 0.5 * u * ts * ts + v_sat * (dt - ts)
        v_new = v_sat
    return replace(state, x=x, v=min(max(v_new, v_min), v_max), u_held=u)


def measure(state: VehicleState, noise: NoiseConfig, rng: np.random.Generator,
            t: float = 0.0) -> MeasuredState:
    """Add independent uniform noise, bounded by the configured half-widths."""
    w_x = rng.uniform(-noise.x, noise.x) if noise.x > 0 else 0.0
    w_v = rng.uniform(-noise.v, noise.v) if noise.v > 0 else 0.0
    return MeasuredState(state.id, state.lane, state.x + w_x, state.v + w_v,
                         state.u_held, state.t0, float(w_x), float(w_v), t)


def fuel_rate(v: float, u: float, model: FuelModel) -> float:
    """Polynomial fuel rate: cruise cubic in v plus a speed-dependent acceleration term.

    Negative values (braking) are floored at zero.
    """
    if model is None or len(model.omega) != 4 or len(model.r) != 3:
        from .model import ConfigError
        raise ConfigError("fuel model needs 4 omega and 3 r coefficients")
    w0, w1, w2, w3 = model.omega
    r0, r1, r2 = model.r
    f = w0 + v * (w1 + v * (w2 + v * w3)) + (r0 + v * (r1 + v * r2)) * u
    return max(f, 0.0)


def fuel_over_step(v: float, u: float, dt: float, model: FuelModel,
                   v_min: float, v_max: float) -> float:
    """Simpson estimate of fuel used over one held-control step."""
    ts = _saturation_time(min(max(v, v_min), v_max), u, v_min, v_max)

    def rate(tau):
        u_eff = u if tau < ts else 0.0
        return fuel_rate(speed_at(v, u, tau, v_min, v_max), u_eff, model)

    if ts < dt:
        a = ts
        return (a / 6.0 * (rate(0.0) + 4 * rate(0.5 * a) + rate(a * (1 - 1e-12)))
                + (dt - a) * fuel_rate(speed_at(v, u, dt, v_min, v_max), 0.0, model))
    return dt / 6.0 * (rate(0.0) + 4 * rate(0.5 * dt) + rate(dt))


def actuation_emulation(v_star: float, u_star: float, dT: float) -> float:
    """Velocity set-point after one inner-loop period for a commanded acceleration."""
    if dT <= 0:
        raise ValueError("dT must be > 0")
    return u_star * dT + v_star
