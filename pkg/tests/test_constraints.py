import pytest
from hypothesis import given, strategies as st

from cavmerge.constraints import (NeighborView, b_merge, b_rear_end, clf_row, merge_row, nominal_rows,
                                  rear_end_row, speed_rows)
from cavmerge.model import ControllerParams, Lane, MeasuredState
from oracles import row_value

P = ControllerParams()
L = 3.04


def ms(x, v, vid=0, lane=Lane.MAIN):
    return MeasuredState(vid, lane, x, v, 0.0, 0.0)


def test_rear_end_row_value():
    # b1 = 1.0 - 0.0 - 0.18*0.5 - 0.15 = 0.76, L_f b1 = 0.5 - 0.5 = 0, u = 0 -> 0.76
    row = rear_end_row(ms(0.0, 0.5), ms(1.0, 0.5, 1), P)
    assert row.margin(0.0) == pytest.approx(0.76)
    assert row.coef_u == -0.18


def test_rear_end_value_at_given_point():
    # b1 = 0.5 - 0.09 - 0.15 = 0.26, L_f b1 = -0.1, u = 0.5 -> -0.09; total 0.07 ... u = 0 -> 0.16
    row = rear_end_row(ms(0.0, 0.5), ms(0.5, 0.4, 1), P)
    assert row.margin(0.0) == pytest.approx(0.16)
    assert row.margin(0.5) == pytest.approx(0.07)


def test_barrier_boundary_example():
    # on the barrier boundary, equal speeds, zero input: row is tight
    x_ip = 0.18 * 0.5 + 0.15
    row = rear_end_row(ms(0.0, 0.5), ms(x_ip, 0.5, 1), P)
    assert b_rear_end(0.0, 0.5, x_ip, P) == pytest.approx(0.0)
    assert row.margin(0.0) == pytest.approx(0.0, abs=1e-15)


def test_merge_row_has_no_input_at_entry():
    row = merge_row(ms(0.0, 0.5), ms(1.0, 0.5, 1, Lane.MERGING), P, L)
    assert row.coef_u == 0.0
    assert b_merge(0.0, 0.5, 1.0, P, L) == pytest.approx(0.85)


def test_merge_headway_reaches_full_value_at_mp():
    assert b_merge(L, 0.5, L + 1.0, P, L) == pytest.approx(b_rear_end(L, 0.5, L + 1.0, P))


@given(st.integers(1, 4), st.floats(0, 3), st.floats(0, 1), st.floats(0, 4), st.floats(0, 1), st.floats(-2, 2))
def test_rows_match_oracle(q, x, v, xr, vr, u):
    me, other = ms(x, v), ms(xr, vr, 1)
    row = {1: lambda: rear_end_row(me, other, P), 2: lambda: merge_row(me, other, P, L),
           3: lambda: speed_rows(me, P)[0], 4: lambda: speed_rows(me, P)[1]}[q]()
    assert row.margin(u) == pytest.approx(row_value(q, x, v, xr, vr, u, P, L), abs=1e-12)


def test_clf_row():
    row = clf_row(ms(0.0, 0.6), 0.5, P)
    # 2 (0.1) u + 0.01 <= e
    assert row.margin(0.0, 0.01) == pytest.approx(0.0)
    assert row.margin(-0.05, 0.0) == pytest.approx(0.0)


def test_absent_neighbors_are_omitted():
    tags = [r.tag for r in nominal_rows(ms(0, 0.5), NeighborView(), 0.5, P, L)]
    assert tags == ["vmax", "vmin", "u_bound", "u_bound", "clf"]
    tags = [r.tag for r in nominal_rows(ms(0, 0.5), NeighborView(ms(1, 0.5, 1), ms(1, 0.5, 2)), 0.5, P, L)]
    assert tags[:2] == ["rear_end", "merge"]
