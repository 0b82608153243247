"""Unconstrained energy/time-optimal reference for one vehicle.

With double-integrator dynamics, running cost 1/2 u^2 + beta, fixed terminal
position L, free terminal speed and free terminal time, the costate is linear
in time so the optimal control is ``u*(t) = a*t + b``. The three boundary
conditions are

    u*(tf) = 0                 (free terminal speed)
    a * v*(tf) + beta = 0      (free terminal time, H(tf) = 0)
    x*(tf) = L

Writing tau = tf - t0 and D = L - x0, the position condition gives
``a = 3 (v0 tau - D) / tau^3`` and the problem collapses to one scalar
equation in tau on (0, D/v0].
"""
from __future__ import annotations

from dataclasses import dataclass


class PlannerError(RuntimeError):
    pass


@dataclass(frozen=True)
class ReferencePlan:
    a: float
    b: float
    tf: float
    t0: float
    x0: float
    v0: float
    beta: float
    L: float

    def u(self, t: float) -> float:
        return self.a * t + self.b

    def v(self, t: float) -> float:
        s = t - self.t0
        return self.v0 + 0.5 * self.a * (t * t - self.t0 * self.t0) + self.b * s

    def x(self, t: float) -> float:
        s = t - self.t0
        # integral of v from t0 to t, expanded in local time s
        ub = self.a * self.t0 + self.b
        return self.x0 + self.v0 * s + self.a * s ** 3 / 6.0 + 0.5 * ub * s * s

    @property
    def cost(self) -> float:
        tau = self.tf - self.t0
        return self.beta * tau + self.a * self.a * tau ** 3 / 6.0

    def residuals(self) -> tuple[float, float, float]:
        vf = self.v(self.tf)
        return (abs(self.x(self.tf) - self.L), abs(self.u(self.tf)), abs(self.a + self.beta / vf))


def _accel_coef(tau: float, v0: float, dist: float) -> float:
    return 3.0 * (v0 * tau - dist) / tau ** 3


def _stationarity(tau: float, v0: float, dist: float, beta: float) -> tuple[float, float]:
    """g(tau) = a v(tau) + beta and dg/dtau."""
    a = _accel_coef(tau, v0, dist)
    da = 3.0 * v0 / tau ** 3 - 9.0 * (v0 * tau - dist) / tau ** 4
    vf = v0 - 0.5 * a * tau * tau
    dvf = -0.5 * da * tau * tau - a * tau
    return a * vf + beta, da * vf + a * dvf


def plan_unconstrained(x0: float, v0: float, t0: float, beta: float, L: float,
                       tol: float = 1e-13, max_iter: int = 200) -> ReferencePlan:
    if not v0 > 0:
        raise PlannerError(f"need v0 > 0, got {v0}")
    if not L > x0:
        raise PlannerError(f"need L > x0, got x0={x0}, L={L}")
    if beta < 0:
        raise PlannerError(f"need beta >= 0, got {beta}")
    dist = L - x0
    hi = dist / v0
    if beta == 0.0:
        return ReferencePlan(0.0, 0.0, t0 + hi, t0, x0, v0, beta, L)

    # g(hi) = beta > 0 and g -> -inf as tau -> 0+: bracket and run safeguarded Newton.
    lo = hi
    while True:
        lo *= 0.5
        if _stationarity(lo, v0, dist, beta)[0] < 0:
            break
        if lo < 1e-12 * hi:
            raise PlannerError("could not bracket terminal time")
    tau = 0.5 * (lo + hi)
    for _ in range(max_iter):
        g, dg = _stationarity(tau, v0, dist, beta)
        if g < 0:
            lo = tau
        else:
            hi = tau
        step_ok = dg != 0.0
        if step_ok:
            cand = tau - g / dg
            step_ok = lo < cand < hi
        new = cand if step_ok else 0.5 * (lo + hi)
        if abs(new - tau) <= tol * max(1.0, tau):
            tau = new
            break
        tau = new
    else:
        g, _ = _stationarity(tau, v0, dist, beta)
        raise PlannerError(f"terminal-time solve did not converge (residual {g:.3e})")

    a = _accel_coef(tau, v0, dist)
    vf = v0 - 0.5 * a * tau * tau
    if vf <= 0:
        raise PlannerError(f"rejected root with terminal speed {vf}")
    tf = t0 + tau
    plan = ReferencePlan(a, -a * tf, tf, t0, x0, v0, beta, L)
    res = plan.residuals()
    if max(res) > 1e-8 * max(1.0, L):
        raise PlannerError(f"plan residuals too large: {res}")
    return plan


def ref_at(plan: ReferencePlan, t: float, u_min: float, u_max: float,
           v_min: float, v_max: float) -> tuple[float, float]:
    """Reference (u_ref, v_ref) at time t, clamped to actuation and speed limits."""
    if t > plan.tf:
        u, v = 0.0, plan.v(plan.tf)
    else:
        u, v = plan.u(t), plan.v(t)
    return min(max(u, u_min), u_max), min(max(v, v_min), v_max)
