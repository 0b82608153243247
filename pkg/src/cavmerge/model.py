"""Domain types shared by the controller, coordinator and simulator.

All quantities are SI: meters, seconds, m/s, m/s^2.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Optional


class Lane(str, enum.Enum):
    MAIN = "main"
    MERGING = "merging"

    @property
    def order(self) -> int:
        # tie-break order for simultaneous admissions
        return 0 if self is Lane.MAIN else 1


class ConfigError(ValueError):
    """Raised when a scenario configuration violates an invariant."""

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class VehicleState:
    id: int
    lane: Lane
    x: float
    v: float
    u_held: float = 0.0
    t0: float = 0.0


@dataclass(frozen=True)
class MeasuredState:
    """Noisy observation of a vehicle: true state plus bounded noise."""

    id: int
    lane: Lane
    x: float
    v: float
    u_held: float
    t0: float
    w_x: float = 0.0
    w_v: float = 0.0
    t_meas: float = 0.0

    @classmethod
    def exact(cls, state: VehicleState, t: float = 0.0) -> "MeasuredState":
        return cls(state.id, state.lane, state.x, state.v, state.u_held, state.t0, 0.0, 0.0, t)


@dataclass(frozen=True)
class CorridorGeometry:
    L: float = 3.04
    exit_len: float = 0.3


@dataclass(frozen=True)
class ControllerParams:
    phi: float = 0.18
    delta: float = 0.15
    k1: float = 1.0
    k2: float = 1.0
    k3: float = 1.0
    k4: float = 1.0
    c3: float = 1.0
    lam: float = 10.0
    alpha: float = 0.25
    u_min: float = -2.0
    u_max: float = 2.0
    v_min: float = 0.0
    v_max: float = 1.0
    s_x: float = 0.25
    s_v: float = 0.05
    dt_ctrl: float = 0.05
    dt_actuation: float = 0.25
    sample_hz: float = 30.0
    # None means "derive from alpha"
    beta_override: Optional[float] = None

    @property
    def beta(self) -> float:
        if self.beta_override is not None:
            return self.beta_override
        return beta_from_alpha(self.alpha, self.u_max, self.u_min)

    @property
    def dt_sample(self) -> float:
        return 1.0 / self.sample_hz

    def with_(self, **changes) -> "ControllerParams":
        return replace(self, **changes)


ROW_TAGS = ("rear_end", "merge", "vmax", "vmin", "u_bound", "clf")
TAG_RANK = {tag: k for k, tag in enumerate(ROW_TAGS)}


@dataclass(frozen=True)
class ConstraintRow:
    """Affine inequality ``coef_u*u + coef_e*e <sense> rhs`` with sense '>=' or '<='."""

    coef_u: float
    coef_e: float
    rhs: float
    sense: str
    tag: str

    def __post_init__(self):
        if self.sense not in (">=", "<="):
            raise ValueError(f"bad sense {self.sense!r}")
        if self.tag not in TAG_RANK:
            raise ValueError(f"bad tag {self.tag!r}")

    def lhs(self, u: float, e: float = 0.0) -> float:
        return self.coef_u * u + self.coef_e * e

    def margin(self, u: float, e: float = 0.0) -> float:
        """Signed slack; nonnegative iff the row holds at (u, e).

        For CBF rows this is exactly L_f b + L_g b * u + gamma(b).
        """
        if self.sense == ">=":
            return self.lhs(u, e) - self.rhs
        return self.rhs - self.lhs(u, e)

    def normalized(self) -> tuple[float, float, float]:
        """Return (a, c, r) with the row rewritten as a*u + c*e >= r."""
        if self.sense == ">=":
            return self.coef_u, self.coef_e, self.rhs
        return -self.coef_u, -self.coef_e, -self.rhs


def beta_from_alpha(alpha: float, u_max: float, u_min: float) -> float:
    """Time weight after normalizing the alpha-weighted time/energy objective."""
    if not 0.0 <= alpha < 1.0:
        raise ConfigError(f"alpha must lie in [0, 1), got {alpha}")
    return alpha * max(u_max * u_max, u_min * u_min) / (2.0 * (1.0 - alpha))
