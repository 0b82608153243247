"""Exact solver for the per-step tracking QP in (u, e).

    minimize   1/2 (u - u_ref)^2 + lam * e^2
    subject to affine rows  a*u + c*e >= r

Two decision variables and a handful of rows make exhaustive active-set
enumeration (every subset of at most two rows) exact and cheap. Feasibility is
decided separately on the u-axis after eliminating e, so an infeasible verdict
always comes with a pair of conflicting rows.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional, Sequence

import numpy as np

from .model import TAG_RANK, ConstraintRow

_DEGENERATE = 1e-14
DEBUG_KKT = bool(os.environ.get("CAVMERGE_DEBUG_KKT"))


@dataclass(frozen=True)
class QpProblem:
    u_ref: float
    lam: float
    rows: tuple

    def __init__(self, u_ref: float, lam: float, rows: Sequence[ConstraintRow]):
        object.__setattr__(self, "u_ref", float(u_ref))
        object.__setattr__(self, "lam", float(lam))
        object.__setattr__(self, "rows", tuple(rows))

    def objective(self, u: float, e: float) -> float:
        return 0.5 * (u - self.u_ref) ** 2 + self.lam * e * e


@dataclass(frozen=True)
class Feasibility:
    feasible: bool
    u_lo: float
    u_hi: float
    # rows (or derived e-eliminated pairs) that produced the binding bounds
    lo_src: tuple = ()
    hi_src: tuple = ()
    degenerate: Optional[ConstraintRow] = None

    @property
    def certificate(self) -> tuple:
        if self.feasible:
            return ()
        if self.degenerate is not None:
            return (self.degenerate,)
        return self.lo_src + self.hi_src


@dataclass(frozen=True)
class QpOutcome:
    status: str
    u: float
    e: float
    active_set: tuple = ()
    objective: float = math.nan
    feas: Optional[Feasibility] = field(default=None, compare=False)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def feasibility_probe(rows: Sequence[ConstraintRow]) -> Feasibility:
    """Exact u-interval left after eliminating e (Fourier-Motzkin)."""
    lo, hi = -math.inf, math.inf
    lo_src: tuple = ()
    hi_src: tuple = ()
    e_lower, e_upper = [], []

    def bound(a, r, src):
        nonlocal lo, hi, lo_src, hi_src
        if abs(a) < _DEGENERATE:
            return r > 0.0
        val = r / a
        if a > 0:
            if val > lo:
                lo, lo_src = val, src
        elif val < hi:
            hi, hi_src = val, src
        return False

    for row in rows:
        a, c, r = row.normalized()
        if abs(c) < _DEGENERATE:
            if bound(a, r, (row,)):
                return Feasibility(False, lo, hi, lo_src, hi_src, degenerate=row)
        elif c > 0:
            e_lower.append((a, c, r, row))
        else:
            e_upper.append((a, c, r, row))
    # (r1 - a1 u)/c1 <= e <= (r2 - a2 u)/c2 with c1 > 0 > c2
    for a1, c1, r1, row1 in e_lower:
        for a2, c2, r2, row2 in e_upper:
            a = a1 / c1 - a2 / c2
            r = r1 / c1 - r2 / c2
            if bound(a, r, (row1, row2)):
                return Feasibility(False, lo, hi, lo_src, hi_src, degenerate=row1)
    return Feasibility(lo <= hi, lo, hi, lo_src, hi_src)


def _rank(rows) -> tuple:
    return tuple(sorted(TAG_RANK[r.tag] for r in rows))


def solve(problem: QpProblem, check_kkt: bool = DEBUG_KKT) -> QpOutcome:
    if not problem.lam > 0:
        raise ValueError("lam must be > 0")
    feas = feasibility_probe(problem.rows)
    if not feas.feasible:
        return QpOutcome("infeasible", math.nan, math.nan, (), math.nan, feas)

    norm = [r.normalized() for r in problem.rows]
    tols = [1e-10 * max(1.0, abs(a), abs(c), abs(r)) for a, c, r in norm]
    u0, h_e = problem.u_ref, 2.0 * problem.lam

    def feasible(u, e, tol_scale):
        for (a, c, r), t in zip(norm, tols):
            if a * u + c * e - r < -t * tol_scale:
                return False
        return True

    candidates = [((), u0, 0.0)]
    idx = range(len(norm))
    for j in idx:
        a, c, r = norm[j]
        denom = a * a + c * c / h_e
        if denom < 1e-300:
            continue
        t = (r - a * u0) / denom
        candidates.append(((j,), u0 + t * a, t * c / h_e))
    for j, k in combinations(idx, 2):
        a1, c1, r1 = norm[j]
        a2, c2, r2 = norm[k]
        det = a1 * c2 - a2 * c1
        scale = max(abs(a1), abs(c1)) * max(abs(a2), abs(c2))
        if abs(det) <= 1e-13 * scale or scale == 0.0:
            continue
        u = (r1 * c2 - r2 * c1) / det
        e = (a1 * r2 - a2 * r1) / det
        candidates.append(((j, k), u, e))

    for tol_scale in (1.0, 1e2, 1e4):
        found = [(problem.objective(u, e), act, u, e)
                 for act, u, e in candidates if feasible(u, e, tol_scale)]
        if found:
            break
    else:
        # probe says nonempty but no vertex survived round-off: report as infeasible
        return QpOutcome("infeasible", math.nan, math.nan, (), math.nan, feas)

    best_obj = min(f[0] for f in found)
    near = [f for f in found if f[0] <= best_obj + 1e-14 * max(1.0, abs(best_obj))]
    obj, act, u, e = min(near, key=lambda f: (_rank(problem.rows[j] for j in f[1]), f[0]))
    tags = tuple(sorted((problem.rows[j].tag for j in act), key=TAG_RANK.__getitem__))
    out = QpOutcome("optimal", u, e, tags, obj, feas)
    if check_kkt:
        res, mu_min = kkt_check(problem, out)
        assert res < 1e-7 and mu_min > -1e-7, f"KKT check failed: res={res}, mu_min={mu_min}"
    return out


def kkt_check(problem: QpProblem, out: QpOutcome, tight_tol: float = 1e-8) -> tuple[float, float]:
    """Stationarity residual and smallest multiplier over the rows tight at the optimum.

    The gradient of the objective must be a nonnegative combination of the
    inward normals of the tight rows.
    """
    from scipy.optimize import nnls

    grad = np.array([out.u - problem.u_ref, 2.0 * problem.lam * out.e])
    tight = []
    for row in problem.rows:
        a, c, r = row.normalized()
        if abs(a * out.u + c * out.e - r) <= tight_tol * max(1.0, abs(a), abs(c), abs(r)):
            tight.append((a, c))
    if not tight:
        return float(np.linalg.norm(grad)), 0.0
    N = np.array(tight, dtype=float).T
    mu, res = nnls(N, grad)
    return float(res), float(mu.min())


def upper_bound(rows: Sequence[ConstraintRow]) -> float:
    """Tightest upper bound on u over rows that do not involve e."""
    hi = math.inf
    for row in rows:
        a, c, r = row.normalized()
        if abs(c) < _DEGENERATE and a < -_DEGENERATE:
            hi = min(hi, r / a)
    return hi
