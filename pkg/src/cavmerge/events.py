"""Event-triggered CBF machinery.

At each event time a vehicle freezes a box around its own measured state and
around the measured states of its constraint partners. The control computed
then must satisfy every CBF condition for *all* states in those boxes, which is
arranged by replacing each term of ``L_f b + L_g b u + gamma(b) >= 0`` with its
worst case over the boxes. A new QP is solved only when a measurement reaches
the boundary of one of the frozen boxes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional

from . import qp
from .constraints import NeighborView, actuation_rows, cbf_row, clf_row, nominal_rows
from .model import ConstraintRow, ControllerParams, MeasuredState

EVENT_SELF, EVENT_IP, EVENT_IC = 1, 2, 3


@dataclass(frozen=True)
class ClippedBox:
    x_lo: float
    x_hi: float
    v_lo: float
    v_hi: float

    @classmethod
    def around(cls, x: float, v: float, s_x: float, s_v: float, p: ControllerParams,
               x_max: float = math.inf) -> "ClippedBox":
        """Trigger box [state - s, state + s] clipped to the admissible speeds and road extent."""
        x_lo = min(max(x - s_x, 0.0), x_max)
        x_hi = max(min(x + s_x, x_max), x_lo)
        v_lo = min(max(v - s_v, p.v_min), p.v_max)
        v_hi = max(min(v + s_v, p.v_max), v_lo)
        return cls(x_lo, x_hi, v_lo, v_hi)

    def contains(self, x: float, v: float, tol: float = 0.0) -> bool:
        return (self.x_lo - tol <= x <= self.x_hi + tol) and (self.v_lo - tol <= v <= self.v_hi + tol)

    def vertices(self):
        for x in (self.x_lo, self.x_hi):
            for v in (self.v_lo, self.v_hi):
                yield x, v


@dataclass(frozen=True)
class EventAnchor:
    snapshot: MeasuredState
    s_x: float
    s_v: float
    t_k: float

    def box(self, p: ControllerParams, x_max: float = math.inf) -> ClippedBox:
        return ClippedBox.around(self.snapshot.x, self.snapshot.v, self.s_x, self.s_v, p, x_max)

    def reached(self, meas: MeasuredState) -> bool:
        """True once the measurement is on or beyond the box boundary."""
        return (abs(meas.x - self.snapshot.x) >= self.s_x
                or abs(meas.v - self.snapshot.v) >= self.s_v)


@dataclass(frozen=True)
class VehicleAnchors:
    """What vehicle i froze at its last event: its own box and its partners' boxes."""

    me: EventAnchor
    ip: Optional[EventAnchor] = None
    ic: Optional[EventAnchor] = None

    @property
    def ip_id(self):
        return None if self.ip is None else self.ip.snapshot.id

    @property
    def ic_id(self):
        return None if self.ic is None else self.ic.snapshot.id


@dataclass(frozen=True)
class ConservativeTerms:
    q: int
    bf_min: float
    bg: float
    bgamma_min: float


def _need_rel(q, rel_box):
    if q in (1, 2) and rel_box is None:
        raise ValueError(f"constraint {q} needs the partner's box")


def min_lf(q: int, me: ClippedBox, rel: Optional[ClippedBox], p: ControllerParams, L: float) -> float:
    """Smallest drift term L_f b_q over the boxes."""
    _need_rel(q, rel)
    if q == 1:
        return rel.v_lo - me.v_hi
    if q == 2:
        # -v - (phi/L) v^2 is decreasing for v >= 0
        return rel.v_lo - me.v_hi - p.phi / L * me.v_hi * me.v_hi
    if q in (3, 4):
        return 0.0
    raise ValueError(f"unknown constraint index {q}")


def min_gamma(q: int, me: ClippedBox, rel: Optional[ClippedBox], p: ControllerParams, L: float) -> float:
    """Smallest class-K term k_q * b_q over the boxes."""
    _need_rel(q, rel)
    if q == 1:
        return p.k1 * (rel.x_lo - me.x_hi - p.phi * me.v_hi - p.delta)
    if q == 2:
        # x, v >= 0 so the bilinear headway term peaks at the upper corner
        return p.k2 * (rel.x_lo - me.x_hi - p.phi / L * me.x_hi * me.v_hi - p.delta)
    if q == 3:
        return p.k3 * (p.v_max - me.v_hi)
    if q == 4:
        return p.k4 * (me.v_lo - p.v_min)
    raise ValueError(f"unknown constraint index {q}")


def limit_lg2(me: ClippedBox, u_nonneg: bool, p: ControllerParams, L: float) -> float:
    """Worst-case L_g b2 = -(phi/L) x: its minimum if u >= 0, its maximum otherwise."""
    return -p.phi / L * (me.x_hi if u_nonneg else me.x_lo)


def conservative_terms(q: int, me: ClippedBox, rel: Optional[ClippedBox], p: ControllerParams,
                       L: float, u_nonneg: bool = True) -> ConservativeTerms:
    bg = {1: -p.phi, 3: -1.0, 4: 1.0}.get(q)
    if q == 2:
        bg = limit_lg2(me, u_nonneg, p, L)
    return ConservativeTerms(q, min_lf(q, me, rel, p, L), bg, min_gamma(q, me, rel, p, L))


_TAG = {1: "rear_end", 2: "merge", 3: "vmax", 4: "vmin"}


def conservative_rows(me: ClippedBox, ip: Optional[ClippedBox], ic: Optional[ClippedBox],
                      p: ControllerParams, L: float, signs=(True,), joint: bool = False
                      ) -> list[ConstraintRow]:
    """CBF rows valid for every state in the boxes.

    ``signs`` lists the branches of the merge-row input coefficient to emit:
    (True,) for u >= 0, (False,) for u < 0, both for a row set valid for any u.
    With ``joint`` the merge condition is imposed at every vertex of the own box
    instead of minimizing each term separately.
    """
    rows = []
    if ip is not None:
        t = conservative_terms(1, me, ip, p, L)
        rows.append(cbf_row(t.bf_min, t.bg, t.bgamma_min, "rear_end"))
    if ic is not None:
        if joint:
            for x, v in me.vertices():
                lf = ic.v_lo - v - p.phi / L * v * v
                gamma = p.k2 * (ic.x_lo - x - p.phi / L * x * v - p.delta)
                rows.append(cbf_row(lf, -p.phi / L * x, gamma, "merge"))
        else:
            for nonneg in signs:
                t = conservative_terms(2, me, ic, p, L, nonneg)
                rows.append(cbf_row(t.bf_min, t.bg, t.bgamma_min, "merge"))
    for q in (3, 4):
        t = conservative_terms(q, me, None, p, L)
        rows.append(cbf_row(t.bf_min, t.bg, t.bgamma_min, _TAG[q]))
    return rows


@dataclass(frozen=True)
class EventSolve:
    outcome: qp.QpOutcome
    problem: qp.QpProblem
    nominal: qp.QpOutcome
    n_solves: int
    both_branches: bool


def build_conservative_qp(anchors: VehicleAnchors, plan_ref: tuple[float, float],
                          p: ControllerParams, L: float, x_max: float = math.inf,
                          joint: bool = False, signs=None) -> tuple[qp.QpProblem, qp.QpOutcome]:
    """Event-triggered QP for one vehicle.

    The sign of u needed by the merge row is read from the nominal QP at the
    snapshot. If that QP is infeasible both branches are emitted.
    """
    u_ref, v_ref = plan_ref
    me = anchors.me.snapshot
    nb = NeighborView(None if anchors.ip is None else anchors.ip.snapshot,
                      None if anchors.ic is None else anchors.ic.snapshot)
    nominal = qp.solve(qp.QpProblem(u_ref, p.lam, nominal_rows(me, nb, v_ref, p, L)))
    if signs is None:
        signs = (nominal.u >= 0.0,) if nominal.optimal else (True, False)
    me_box = anchors.me.box(p, x_max)
    ip_box = None if anchors.ip is None else anchors.ip.box(p)
    ic_box = None if anchors.ic is None else anchors.ic.box(p)
    rows = conservative_rows(me_box, ip_box, ic_box, p, L, signs, joint)
    rows.append(clf_row(me, v_ref, p))
    rows.extend(actuation_rows(p))
    return qp.QpProblem(u_ref, p.lam, rows), nominal


def solve_event_qp(anchors: VehicleAnchors, plan_ref: tuple[float, float], p: ControllerParams,
                   L: float, x_max: float = math.inf, joint: bool = False) -> EventSolve:
    problem, nominal = build_conservative_qp(anchors, plan_ref, p, L, x_max, joint)
    out = qp.solve(problem)
    n = 1
    both = not nominal.optimal
    if (anchors.ic is not None and not joint and not both and out.optimal
            and (out.u >= 0.0) != (nominal.u >= 0.0)):
        # the merge-row branch no longer matches the sign of the answer
        problem, _ = build_conservative_qp(anchors, plan_ref, p, L, x_max, joint, signs=(True, False))
        out = qp.solve(problem)
        n += 1
        both = True
    return EventSolve(out, problem, nominal, n, both)


def detect_events(current: Mapping[int, MeasuredState], anchors: Mapping[int, VehicleAnchors],
                  neighbors: Mapping[int, tuple]) -> set:
    """Vehicles whose next QP is due, as (vehicle id, event kind) pairs.

    Kind 1: own measurement reached its box boundary. Kinds 2 and 3: the same for
    the rear-end partner and the merge partner, including a change of partner.
    """
    out = set()
    for vid, (ip_id, ic_id) in neighbors.items():
        anc = anchors.get(vid)
        if anc is None or vid not in current:
            continue
        if anc.me.reached(current[vid]):
            out.add((vid, EVENT_SELF))
        if ip_id != anc.ip_id or (ip_id is not None and anc.ip.reached(current[ip_id])):
            out.add((vid, EVENT_IP))
        if ic_id != anc.ic_id or (ic_id is not None and anc.ic.reached(current[ic_id])):
            out.add((vid, EVENT_IC))
    return out
