"""Linear-in-u constraint rows for the nominal (time-driven) tracking QP.

Every CBF row has the form ``L_f b + L_g b * u + k * b >= 0`` and is stored as
``L_g b * u >= -(L_f b + k * b)`` so that ``row.margin(u)`` returns the left side.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .model import ConstraintRow, ControllerParams, MeasuredState


@dataclass(frozen=True)
class NeighborView:
    ip: Optional[MeasuredState] = None
    ic: Optional[MeasuredState] = None


def cbf_row(lf: float, lg: float, gamma: float, tag: str) -> ConstraintRow:
    return ConstraintRow(lg, 0.0, -(lf + gamma), ">=", tag)


def b_rear_end(x: float, v: float, x_ip: float, p: ControllerParams) -> float:
    return x_ip - x - p.phi * v - p.delta


def b_merge(x: float, v: float, x_ic: float, p: ControllerParams, L: float) -> float:
    return x_ic - x - p.phi * x / L * v - p.delta


def rear_end_row(me: MeasuredState, ip: MeasuredState, p: ControllerParams) -> ConstraintRow:
    lf = ip.v - me.v
    gamma = p.k1 * b_rear_end(me.x, me.v, ip.x, p)
    return cbf_row(lf, -p.phi, gamma, "rear_end")


def merge_row(me: MeasuredState, ic: MeasuredState, p: ControllerParams, L: float) -> ConstraintRow:
    # headway phi is replaced by phi * x / L so the constraint is smooth along the road
    lf = ic.v - me.v - p.phi / L * me.v * me.v
    lg = -p.phi * me.x / L
    gamma = p.k2 * b_merge(me.x, me.v, ic.x, p, L)
    return cbf_row(lf, lg, gamma, "merge")


def speed_rows(me: MeasuredState, p: ControllerParams) -> tuple[ConstraintRow, ConstraintRow]:
    vmax = cbf_row(0.0, -1.0, p.k3 * (p.v_max - me.v), "vmax")
    vmin = cbf_row(0.0, 1.0, p.k4 * (me.v - p.v_min), "vmin")
    return vmax, vmin


def clf_row(me: MeasuredState, v_ref: float, p: ControllerParams) -> ConstraintRow:
    """2 (v - v_ref) u + c3 (v - v_ref)^2 <= e, with v_ref held over the step."""
    err = me.v - v_ref
    return ConstraintRow(2.0 * err, -1.0, -p.c3 * err * err, "<=", "clf")


def actuation_rows(p: ControllerParams) -> tuple[ConstraintRow, ConstraintRow]:
    return (ConstraintRow(1.0, 0.0, p.u_max, "<=", "u_bound"),
            ConstraintRow(1.0, 0.0, p.u_min, ">=", "u_bound"))


def nominal_rows(me: MeasuredState, nb: NeighborView, v_ref: float,
                 p: ControllerParams, L: float) -> list[ConstraintRow]:
    """All rows of the time-driven QP; rows for absent neighbors are omitted."""
    rows = []
    if nb.ip is not None:
        rows.append(rear_end_row(me, nb.ip, p))
    if nb.ic is not None:
        rows.append(merge_row(me, nb.ic, p, L))
    rows.extend(speed_rows(me, p))
    rows.extend(actuation_rows(p))
    rows.append(clf_row(me, v_ref, p))
    return rows
