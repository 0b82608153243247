"""Closed-loop merging simulation under time-driven or event-triggered control.

One scenario runs on a fixed master tick equal to the sensor sampling period.
Each tick: integrate held controls exactly, hand over vehicles that crossed the
merging point, admit arrivals, measure, exchange state packets through the
coordinator, then re-solve QPs (every ``dt_ctrl`` in time mode, on events in
event mode) and record the trace.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

from . import qp
from .config import RngStreams, ScenarioConfig, check_config
from .constraints import NeighborView, b_merge, b_rear_end, nominal_rows
from .coordinator import Coordinator, MessageBus, StatePacket
from .dynamics import actuation_emulation, fuel_over_step, measure, step_dynamics
from .events import EventAnchor, VehicleAnchors, detect_events, solve_event_qp
from .model import Lane, MeasuredState, VehicleState
from .planner import ReferencePlan, plan_unconstrained, ref_at
from .trace import Trace

log = logging.getLogger(__name__)

LANE_LAT = {Lane.MAIN: 0.0, Lane.MERGING: 0.5}


@dataclass(frozen=True)
class Arrival:
    vid: int
    t: float
    lane: Lane
    v0: float
    x0: float = 0.0


@dataclass
class RunMetrics:
    avg_travel_time: float = math.nan
    avg_half_u2: float = math.nan
    avg_fuel: float = math.nan
    qp_solve_count: int = 0
    infeasible_count: int = 0
    min_b1: float = math.inf
    min_b2: float = math.inf
    event_counts: dict = field(default_factory=lambda: {1: 0, 2: 0, 3: 0})
    sign_probe_count: int = 0
    n_exited: int = 0
    n_deferred: int = 0
    packets_delivered: int = 0
    protocol_errors: int = 0
    truncated: bool = False
    sim_time: float = 0.0

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        counts = d.pop("event_counts")
        for k in (1, 2, 3):
            d[f"event{k}_count"] = counts[k]
        return d


@dataclass
class Vehicle:
    state: VehicleState
    plan: ReferencePlan
    t_entry: float
    u_cmd: float = 0.0
    anchors: Optional[VehicleAnchors] = None
    t_exit: Optional[float] = None
    energy: float = 0.0
    fuel: float = 0.0
    v_star: Optional[float] = None
    u_applied: float = 0.0
    has_control: bool = False


def generate_arrivals(cfg: ScenarioConfig, streams: RngStreams) -> list[Arrival]:
    if cfg.scripted is not None:
        items = sorted(cfg.scripted, key=lambda a: (a.t, a.lane.order))
        return [Arrival(k + 1, a.t, a.lane, a.v0, a.x0) for k, a in enumerate(items)]
    a = cfg.arrivals
    n = a.n_vehicles
    raw = []
    for lane, rate, name in ((Lane.MAIN, a.rate_main, "arrivals_main"),
                             (Lane.MERGING, a.rate_merging, "arrivals_merging")):
        if rate <= 0:
            continue
        times = streams[name].exponential(1.0 / rate, size=n).cumsum()
        raw.extend((float(t), lane) for t in times)
    raw.sort(key=lambda r: (r[0], r[1].order))
    raw = raw[:n]
    speeds = streams["speeds"].uniform(a.v0_low, a.v0_high, size=len(raw))
    return [Arrival(k + 1, t, lane, float(v)) for k, ((t, lane), v) in enumerate(zip(raw, speeds))]


def fallback_control(out: qp.QpOutcome, rows, u_min: float, u_max: float) -> float:
    """Control applied when the QP is infeasible: brake as hard as the bounds and the
    most binding upper-bound row allow."""
    if out.feas is not None and out.feas.degenerate is not None:
        return u_min
    return min(max(u_min, qp.upper_bound(rows)), u_max)


class Simulation:
    def __init__(self, cfg: ScenarioConfig, seed: Optional[int] = None):
        self.cfg = check_config(cfg if seed is None else cfg.with_(seed=seed))
        self.p = self.cfg.controller
        self.L = self.cfg.geometry.L
        self.streams = RngStreams(self.cfg.seed)
        self.arrivals = generate_arrivals(self.cfg, self.streams)
        self.coord = Coordinator()
        self.bus = MessageBus(self.coord)
        self.vehicles: dict[int, Vehicle] = {}
        self.finished: list[Vehicle] = []
        self.metrics = RunMetrics()
        self.trace = Trace()
        self.dt = self.p.dt_sample
        self._deferred_logged: set = set()

    # -- helpers -------------------------------------------------------------
    def _boundary(self, n: int, period: float) -> bool:
        if n == 0:
            return True
        eps = 1e-9
        return math.floor(n * self.dt / period + eps) > math.floor((n - 1) * self.dt / period + eps)

    def _in_zone(self, vid: int) -> bool:
        return self.coord.index_of(vid) >= 1

    def _entry_safe(self, arr: Arrival) -> bool:
        """Spawn gate, identical in both modes so matched runs admit by one policy.

        ``barrier``: rear-end and merge barriers are nonnegative at the entry state.
        ``feasible`` (default): additionally the event-triggered QP over the trigger
        box around the entry state has a solution, i.e. the entry state is one from
        which the controller can start.
        """
        p, L = self.p, self.L
        table = self.coord.table
        if not table:
            return True
        ip = ic = None
        same = [e for e in table if e.lane == arr.lane]
        if same:
            ip = self.vehicles[same[-1].vid].state
            if b_rear_end(arr.x0, arr.v0, ip.x, p) < 0:
                return False
        if table[-1].lane != arr.lane:
            ic = self.vehicles[table[-1].vid].state
            if b_merge(arr.x0, arr.v0, ic.x, p, L) < 0:
                return False
        if self.cfg.entry_rule == "barrier":
            return True

        def anchor(st):
            return None if st is None else EventAnchor(MeasuredState.exact(st, 0.0), p.s_x, p.s_v, 0.0)

        me = VehicleState(arr.vid, arr.lane, arr.x0, arr.v0)
        anchors = VehicleAnchors(anchor(me), anchor(ip), anchor(ic))
        plan = plan_unconstrained(arr.x0, arr.v0, 0.0, p.beta, L)
        ref = ref_at(plan, 0.0, p.u_min, p.u_max, p.v_min, p.v_max)
        res = solve_event_qp(anchors, ref, p, L, L + self.cfg.geometry.exit_len, self.cfg.joint_min)
        return res.outcome.optimal

    # -- main loop -----------------------------------------------------------
    def run(self) -> tuple[RunMetrics, Trace]:
        pending = list(self.arrivals)
        n = 0
        while True:
            t = n * self.dt
            if n > 0:
                self._integrate(t)
            self._admit(pending, t)
            meas = self._measure(t)
            nmap = self.coord.neighbor_map()
            self._exchange(meas)
            solved = self._control(n, t, meas, nmap)
            self._record(t, meas, nmap, solved)
            if not pending and all(v.t_exit is not None for v in self.vehicles.values()):
                break
            if t >= self.cfg.t_max:
                self.metrics.truncated = True
                log.warning("run truncated at t=%.3f with %d vehicles in zone", t, len(nmap))
                break
            n += 1
        self.metrics.sim_time = n * self.dt
        self._finalize()
        return self.metrics, self.trace

    def _integrate(self, t: float):
        p, dt = self.p, self.dt
        for vid in sorted(self.vehicles):
            veh = self.vehicles[vid]
            in_zone = veh.t_exit is None
            u = veh.u_applied if in_zone else 0.0
            if in_zone:
                veh.energy += 0.5 * u * u * dt
                veh.fuel += fuel_over_step(veh.state.v, u, dt, self.cfg.fuel, p.v_min, p.v_max)
            old = veh.state
            veh.state = step_dynamics(old, u, dt, p.v_min, p.v_max)
            if in_zone and veh.state.x >= self.L:
                veh.t_exit = t - dt + self._crossing_time(old, u, dt)
        # hand over crossings in FIFO order
        crossed = [vid for vid, veh in self.vehicles.items()
                   if veh.t_exit is not None and self.coord.index_of(vid) >= 1]
        for vid in sorted(crossed, key=lambda v: (self.vehicles[v].t_exit, self.coord.index_of(v))):
            old_zero = self.coord.at(0)
            self.coord.cross_mp(vid)
            if old_zero is not None:
                self._retire(old_zero.vid)
            self.vehicles[vid].u_cmd = 0.0
            self.vehicles[vid].u_applied = 0.0
            self.vehicles[vid].anchors = None
        self.metrics.protocol_errors = len(self.coord.protocol_errors)

    def _crossing_time(self, old: VehicleState, u: float, dt: float) -> float:
        p = self.p
        lo, hi = 0.0, dt
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if step_dynamics(old, u, mid, p.v_min, p.v_max).x >= self.L:
                hi = mid
            else:
                lo = mid
        return hi

    def _retire(self, vid: int):
        veh = self.vehicles.pop(vid)
        self.finished.append(veh)
        self.bus.forget(vid)

    def _admit(self, pending: list, t: float):
        eps = 1e-12
        while True:
            heads = {}
            for arr in pending:
                if arr.lane not in heads:
                    heads[arr.lane] = arr
            ready = [a for a in heads.values() if a.t <= t + eps]
            ready.sort(key=lambda a: (a.t, a.lane.order))
            admitted = False
            for arr in ready:
                if not self._entry_safe(arr):
                    if arr.vid not in self._deferred_logged:
                        self._deferred_logged.add(arr.vid)
                        self.metrics.n_deferred += 1
                        log.info("deferring entry of vehicle %d at t=%.3f", arr.vid, t)
                    continue
                pending.remove(arr)
                self.coord.admit(arr.vid, arr.lane, t)
                state = VehicleState(arr.vid, arr.lane, arr.x0, arr.v0, 0.0, t)
                plan = plan_unconstrained(arr.x0, arr.v0, t, self.p.beta, self.L)
                self.vehicles[arr.vid] = Vehicle(state, plan, t)
                admitted = True
                break
            if not admitted:
                return

    def _measure(self, t: float) -> dict:
        rng = self.streams["noise"]
        return {vid: measure(self.vehicles[vid].state, self.cfg.noise, rng, t)
                for vid in sorted(self.vehicles)}

    def _exchange(self, meas: dict):
        for e in self.coord.table:
            m = meas[e.vid]
            self.bus.publish(StatePacket(e.index, m.x, LANE_LAT[m.lane], m.v))
        self.bus.flush()
        self.metrics.packets_delivered = self.bus.delivered

    def _partner(self, vid: int, key: str, pid: Optional[int], t: float) -> Optional[MeasuredState]:
        if pid is None:
            return None
        x_long, _, v = self.bus.inbox[vid][key]
        st = self.vehicles[pid].state
        return MeasuredState(pid, st.lane, x_long, v, st.u_held, st.t0, 0.0, 0.0, t)

    def _control(self, n: int, t: float, meas: dict, nmap: dict) -> dict:
        p, L = self.p, self.L
        solved = {}
        if self.cfg.mode == "time":
            due = self._boundary(n, p.dt_ctrl)
            order = [e.vid for e in self.coord.table if e.index >= 1]
            for vid in order:
                veh = self.vehicles[vid]
                if not due and veh.has_control:
                    continue
                ip_id, ic_id = nmap[vid]
                me = meas[vid]
                nb = NeighborView(self._partner(vid, "ip", ip_id, t), self._partner(vid, "ic", ic_id, t))
                u_ref, v_ref = ref_at(veh.plan, t, p.u_min, p.u_max, p.v_min, p.v_max)
                rows = nominal_rows(me, nb, v_ref, p, L)
                out = qp.solve(qp.QpProblem(u_ref, p.lam, rows))
                self.metrics.qp_solve_count += 1
                self._apply(veh, out, rows, me)
                solved[vid] = (out.status, ())
            return solved

        events = detect_events(meas, {vid: v.anchors for vid, v in self.vehicles.items()
                                      if v.anchors is not None}, nmap)
        kinds: dict = {}
        for vid, kind in events:
            kinds.setdefault(vid, set()).add(kind)
            self.metrics.event_counts[kind] += 1
        x_max = L + self.cfg.geometry.exit_len
        for e in self.coord.table:
            if e.index < 1:
                continue
            vid = e.vid
            veh = self.vehicles[vid]
            if veh.anchors is not None and vid not in kinds:
                continue
            ip_id, ic_id = nmap[vid]
            me = meas[vid]
            ip = self._partner(vid, "ip", ip_id, t)
            ic = self._partner(vid, "ic", ic_id, t)
            anchors = VehicleAnchors(
                EventAnchor(me, p.s_x, p.s_v, t),
                None if ip is None else EventAnchor(ip, p.s_x, p.s_v, t),
                None if ic is None else EventAnchor(ic, p.s_x, p.s_v, t))
            ref = ref_at(veh.plan, t, p.u_min, p.u_max, p.v_min, p.v_max)
            res = solve_event_qp(anchors, ref, p, L, x_max, self.cfg.joint_min)
            self.metrics.qp_solve_count += res.n_solves
            self.metrics.sign_probe_count += 1
            veh.anchors = anchors
            self._apply(veh, res.outcome, res.problem.rows, me)
            solved[vid] = (res.outcome.status, tuple(sorted(kinds.get(vid, ()))))
        return solved

    def _apply(self, veh: Vehicle, out: qp.QpOutcome, rows, me: MeasuredState):
        p = self.p
        if out.optimal:
            u = min(max(out.u, p.u_min), p.u_max)
        else:
            self.metrics.infeasible_count += 1
            u = fallback_control(out, rows, p.u_min, p.u_max)
        veh.u_cmd = u
        veh.has_control = True
        if self.cfg.actuation == "emulated":
            veh.v_star = me.v
            target = actuation_emulation(veh.v_star, u, p.dt_actuation)
            veh.u_applied = min(max((target - veh.state.v) / p.dt_actuation, p.u_min), p.u_max)
        else:
            veh.u_applied = u

    def _record(self, t: float, meas: dict, nmap: dict, solved: dict):
        p, L = self.p, self.L
        if self.cfg.actuation == "emulated":
            self._advance_emulation(t)
        for e in self.coord.table:
            veh = self.vehicles[e.vid]
            st, m = veh.state, meas[e.vid]
            b1 = b2 = math.nan
            if e.index >= 1:
                ip_id, ic_id = nmap[e.vid]
                if ip_id is not None:
                    b1 = b_rear_end(st.x, st.v, self.vehicles[ip_id].state.x, p)
                    self.metrics.min_b1 = min(self.metrics.min_b1, b1)
                if ic_id is not None:
                    b2 = b_merge(st.x, st.v, self.vehicles[ic_id].state.x, p, L)
                    self.metrics.min_b2 = min(self.metrics.min_b2, b2)
            status, kinds = solved.get(e.vid, ("", ()))
            self.trace.append((t, e.vid, e.index, e.lane.value, st.x, st.v, veh.u_applied,
                               m.x, m.v, b1, b2, p.v_max - st.v, st.v - p.v_min,
                               int(1 in kinds), int(2 in kinds), int(3 in kinds), status))

    def _advance_emulation(self, t: float):
        p = self.p
        n = round(t / self.dt)
        if n == 0 or not self._boundary(n, p.dt_actuation):
            return
        for veh in self.vehicles.values():
            if veh.t_exit is not None or veh.v_star is None:
                continue
            veh.v_star = actuation_emulation(veh.v_star, veh.u_cmd, p.dt_actuation)
            target = actuation_emulation(veh.v_star, veh.u_cmd, p.dt_actuation)
            veh.u_applied = min(max((target - veh.state.v) / p.dt_actuation, p.u_min), p.u_max)

    def _finalize(self):
        done = [v for v in self.finished + list(self.vehicles.values()) if v.t_exit is not None]
        m = self.metrics
        m.n_exited = len(done)
        if done:
            m.avg_travel_time = sum(v.t_exit - v.t_entry for v in done) / len(done)
            m.avg_half_u2 = sum(v.energy for v in done) / len(done)
            m.avg_fuel = sum(v.fuel for v in done) / len(done)


def run_scenario(cfg: ScenarioConfig, seed: Optional[int] = None) -> tuple[RunMetrics, Trace]:
    return Simulation(cfg, seed).run()
