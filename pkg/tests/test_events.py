
import numpy as np
import pytest
from hypothesis import given, strategies as st

from cavmerge.constraints import merge_row, nominal_rows, NeighborView, rear_end_row, speed_rows
from cavmerge.events import (EVENT_IC, EVENT_IP, EVENT_SELF, ClippedBox, EventAnchor, VehicleAnchors,
                             conservative_rows, detect_events, limit_lg2, min_gamma, min_lf,
                             solve_event_qp)
from cavmerge.model import ControllerParams, Lane, MeasuredState
from oracles import box_grid, box_vertices, gamma_value, lf_value

P = ControllerParams()
L = 3.04


def ms(x, v, vid=0, lane=Lane.MAIN, t=0.0):
    return MeasuredState(vid, lane, x, v, 0.0, 0.0, t_meas=t)


ME = ClippedBox.around(1.0, 0.5, 0.25, 0.05, P)
REL = ClippedBox.around(2.0, 0.5, 0.25, 0.05, P)


def test_box_clipping():
    box = ClippedBox.around(0.1, 0.98, 0.25, 0.05, P, x_max=3.34)
    assert (box.x_lo, box.x_hi, box.v_lo, box.v_hi) == (0.0, pytest.approx(0.35), pytest.approx(0.93), 1.0)
    box = ClippedBox.around(3.3, 0.02, 0.25, 0.05, P, x_max=3.34)
    assert box.x_hi == 3.34 and box.v_lo == 0.0


def test_hand_computed_bounds():
    assert min_lf(1, ME, REL, P, L) == pytest.approx(-0.1)
    assert min_gamma(1, ME, REL, P, L) == pytest.approx(0.251)
    assert min_lf(2, ME, REL, P, L) == pytest.approx(-0.1 - 0.18 / 3.04 * 0.55 ** 2)
    assert min_gamma(2, ME, REL, P, L) == pytest.approx(0.35 - 0.18 / 3.04 * 1.25 * 0.55)
    assert min_gamma(3, ME, None, P, L) == pytest.approx(0.45)
    assert min_gamma(4, ME, None, P, L) == pytest.approx(0.45)
    assert min_lf(3, ME, None, P, L) == 0.0


def test_merge_input_coefficient_vanishes_at_entry():
    box = ClippedBox.around(0.1, 0.5, 0.25, 0.05, P)
    assert limit_lg2(box, False, P, L) == 0.0
    assert limit_lg2(box, True, P, L) == pytest.approx(-0.18 / 3.04 * 0.35)


def test_partner_box_required():
    with pytest.raises(ValueError):
        min_lf(1, ME, None, P, L)


@pytest.mark.parametrize("q", [1, 2, 3, 4])
def test_bounds_match_grid_and_vertices(q):
    rng = np.random.default_rng(q)
    for _ in range(50):
        me = ClippedBox.around(rng.uniform(0, 3), rng.uniform(0, 1), 0.25, 0.05, P)
        rel = ClippedBox.around(rng.uniform(0, 4), rng.uniform(0, 1), 0.25, 0.05, P)
        X, V = box_grid(me, 60)
        Xr, Vr = box_grid(rel, 60)
        # terms separate across the two boxes, so minimize each box independently
        grid_lf = min(lf_value(q, X, V, xr, vr, P, L).min() for xr, vr in ((rel.x_lo, rel.v_lo),))
        vert_gamma = min(gamma_value(q, x, v, rel.x_lo, rel.v_lo, P, L) for x, v in box_vertices(me))
        assert min_lf(q, me, rel, P, L) <= grid_lf + 1e-12
        assert min_gamma(q, me, rel, P, L) == pytest.approx(vert_gamma, abs=1e-12)
        grid_gamma = gamma_value(q, X, V, Xr.min(), Vr.min(), P, L).min()
        assert min_gamma(q, me, rel, P, L) <= grid_gamma + 1e-12
        assert grid_gamma - min_gamma(q, me, rel, P, L) < 1e-12


def _nominal_row(q, x, v, xr, vr):
    me, other = ms(x, v), ms(xr, vr, 1)
    return {1: lambda: rear_end_row(me, other, P), 2: lambda: merge_row(me, other, P, L),
            3: lambda: speed_rows(me, P)[0], 4: lambda: speed_rows(me, P)[1]}[q]()


@given(st.floats(0, 3), st.floats(0, 1), st.floats(0, 4), st.floats(0, 1), st.floats(-2, 2),
       st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.booleans())
def test_conservative_rows_never_exceed_nominal(x, v, xr, vr, u, fx, fv, gx, gv, joint):
    me = ClippedBox.around(x, v, 0.25, 0.05, P)
    rel = ClippedBox.around(xr, vr, 0.25, 0.05, P)
    # a true state anywhere in each box
    sx, sv = me.x_lo + fx * (me.x_hi - me.x_lo), me.v_lo + fv * (me.v_hi - me.v_lo)
    rx, rv = rel.x_lo + gx * (rel.x_hi - rel.x_lo), rel.v_lo + gv * (rel.v_hi - rel.v_lo)
    rows = conservative_rows(me, rel, rel, P, L, signs=(u >= 0,), joint=joint)
    # the joint variant emits one merge row per vertex; their minimum is what bounds the true row
    for q, tag in ((1, "rear_end"), (2, "merge"), (3, "vmax"), (4, "vmin")):
        cons = min(r.margin(u) for r in rows if r.tag == tag)
        assert cons <= _nominal_row(q, sx, sv, rx, rv).margin(u) + 1e-12


def test_shrinking_boxes_recover_nominal_rows():
    me_s, ip_s = ms(1.2, 0.6), ms(2.0, 0.4, 1)
    for s in (1e-3, 1e-6):
        me = ClippedBox.around(1.2, 0.6, s, s, P)
        rel = ClippedBox.around(2.0, 0.4, s, s, P)
        cons = conservative_rows(me, rel, rel, P, L)
        nom = [rear_end_row(me_s, ip_s, P), merge_row(me_s, ip_s, P, L), *speed_rows(me_s, P)]
        err = max(abs(c.margin(0.5) - n.margin(0.5)) for c, n in zip(cons, nom))
        assert err < 10 * s


def anchors(me, ip=None, ic=None, s=(0.25, 0.05)):
    wrap = lambda m: None if m is None else EventAnchor(m, s[0], s[1], m.t_meas)
    return VehicleAnchors(wrap(me), wrap(ip), wrap(ic))


def test_event_control_is_more_cautious_than_nominal():
    anc = anchors(ms(1.0, 0.6), ip=ms(2.0, 0.5, 1))
    ev = solve_event_qp(anc, (1.0, 0.8), P, L)
    nom_rows = nominal_rows(anc.me.snapshot, NeighborView(anc.ip.snapshot), 0.8, P, L)
    from cavmerge.qp import QpProblem, solve
    nom = solve(QpProblem(1.0, P.lam, nom_rows))
    assert ev.outcome.optimal and nom.optimal
    assert ev.outcome.u <= nom.u + 1e-12
    assert ev.n_solves == 1


def test_detect_self_event_on_boundary():
    anc = {0: anchors(ms(1.0, 0.5))}
    nbr = {0: (None, None)}
    assert detect_events({0: ms(1.2, 0.5)}, anc, nbr) == set()
    assert detect_events({0: ms(1.25, 0.5)}, anc, nbr) == {(0, EVENT_SELF)}
    assert detect_events({0: ms(1.0, 0.44)}, anc, nbr) == {(0, EVENT_SELF)}


def test_detect_partner_events():
    me, ip = ms(1.0, 0.5), ms(2.0, 0.5, 1)
    anc = {0: anchors(me, ip=ip), 1: anchors(ip)}
    nbr = {0: (1, None), 1: (None, None)}
    moved = {0: me, 1: ms(2.3, 0.5, 1)}
    # the partner's crossing is an Event 2 for the follower and an Event 1 for itself
    assert detect_events(moved, anc, nbr) == {(0, EVENT_IP), (1, EVENT_SELF)}


def test_partner_change_is_an_event():
    me = ms(1.0, 0.5)
    anc = {0: anchors(me)}
    cur = {0: me, 5: ms(2.0, 0.5, 5, Lane.MERGING)}
    assert detect_events(cur, anc, {0: (None, 5)}) == {(0, EVENT_IC)}
