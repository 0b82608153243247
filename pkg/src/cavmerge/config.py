"""Scenario configuration: schema, loading, validation and RNG streams.

Config files are YAML (JSON is a subset) with these top-level keys, all optional::

    geometry:   {L, exit_len}
    controller: {phi, delta, k1..k4, c3, lam, alpha, u_min, u_max, v_min, v_max,
                 s_x, s_v, dt_ctrl, dt_actuation, sample_hz, beta_override}
    arrivals:   {rate_main, rate_merging, v0_low, v0_high, n_vehicles}
    noise:      {x, v}            # uniform noise half-widths; 0 disables
    fuel:       {omega: [w0, w1, w2, w3], r: [r0, r1, r2]}
    mode:       event | time
    seed:       int
    joint_min:  bool              # vertex-wise (joint) minimization variant
    actuation:  ideal | emulated
    entry_rule: feasible | barrier  # spawn gate, see sim.Simulation._entry_safe
    t_max:      float             # hard stop, seconds
    scripted:   [{t, lane, v0, x0}, ...]   # overrides Poisson arrivals; x0 defaults to 0

Unknown keys are rejected.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, fields, asdict, replace
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .model import ConfigError, ControllerParams, CorridorGeometry, Lane

log = logging.getLogger(__name__)

# Fuel-model coefficients commonly used for this polynomial form (mL/s units).
# Placeholders only: acceptance compares event vs time ratios, never absolutes.
DEFAULT_OMEGA = (0.1569, 2.450e-2, -7.415e-4, 5.975e-5)
DEFAULT_R = (0.07224, 9.681e-2, 1.075e-3)


@dataclass(frozen=True)
class ArrivalConfig:
    rate_main: float = 0.3
    rate_merging: float = 0.3
    v0_low: float = 0.1
    v0_high: float = 1.0
    n_vehicles: int = 10


@dataclass(frozen=True)
class NoiseConfig:
    x: float = 0.0
    v: float = 0.0

    @property
    def enabled(self) -> bool:
        return self.x > 0.0 or self.v > 0.0


@dataclass(frozen=True)
class FuelModel:
    omega: tuple = DEFAULT_OMEGA
    r: tuple = DEFAULT_R


@dataclass(frozen=True)
class ScriptedArrival:
    t: float
    lane: Lane
    v0: float
    x0: float = 0.0


@dataclass(frozen=True)
class ScenarioConfig:
    geometry: CorridorGeometry = field(default_factory=CorridorGeometry)
    controller: ControllerParams = field(default_factory=ControllerParams)
    arrivals: ArrivalConfig = field(default_factory=ArrivalConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    fuel: FuelModel = field(default_factory=FuelModel)
    mode: str = "event"
    seed: int = 0
    joint_min: bool = False
    actuation: str = "ideal"
    entry_rule: str = "feasible"
    t_max: float = 120.0
    scripted: Optional[tuple] = None

    def with_(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)

    def with_controller(self, **changes) -> "ScenarioConfig":
        return replace(self, controller=replace(self.controller, **changes))

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.scripted is not None:
            d["scripted"] = [{"t": a.t, "lane": a.lane.value, "v0": a.v0, "x0": a.x0}
                             for a in self.scripted]
        d["fuel"] = {"omega": list(self.fuel.omega), "r": list(self.fuel.r)}
        return d


def validate_config(cfg: ScenarioConfig) -> list[str]:
    """Return every violated invariant as 'field.path: message'. Empty means valid."""
    errs = []
    g, p, a, n = cfg.geometry, cfg.controller, cfg.arrivals, cfg.noise

    def bad(path, msg):
        errs.append(f"{path}: {msg}")

    for name in ("L", "exit_len"):
        val = getattr(g, name)
        if not math.isfinite(val):
            bad(f"geometry.{name}", "must be finite")
    if g.L <= 0:
        bad("geometry.L", f"must be > 0, got {g.L}")
    if g.exit_len < 0:
        bad("geometry.exit_len", f"must be >= 0, got {g.exit_len}")

    for f in fields(p):
        val = getattr(p, f.name)
        if val is not None and not math.isfinite(val):
            bad(f"controller.{f.name}", "must be finite")
    if not p.u_min < 0 < p.u_max:
        bad("controller.u_min/u_max", f"need u_min < 0 < u_max, got [{p.u_min}, {p.u_max}]")
    if not 0 <= p.v_min < p.v_max:
        bad("controller.v_min/v_max", f"need 0 <= v_min < v_max, got [{p.v_min}, {p.v_max}]")
    if not 0 <= p.alpha < 1:
        bad("controller.alpha", f"must lie in [0, 1), got {p.alpha}")
    if p.beta_override is not None and p.beta_override < 0:
        bad("controller.beta_override", "must be >= 0")
    for name in ("phi", "k1", "k2", "k3", "k4", "c3", "lam", "s_x", "s_v",
                 "dt_ctrl", "dt_actuation", "sample_hz"):
        if getattr(p, name) <= 0:
            bad(f"controller.{name}", f"must be > 0, got {getattr(p, name)}")
    if p.delta < 0:
        bad("controller.delta", "must be >= 0")

    if n.x < 0 or n.v < 0:
        bad("noise", "bounds must be >= 0")
    # bounds must dominate the noise they are meant to absorb
    if n.x > p.s_x:
        bad("controller.s_x", f"s_x={p.s_x} < noise bound {n.x}; trigger bounds must be >= sup|w|")
    if n.v > p.s_v:
        bad("controller.s_v", f"s_v={p.s_v} < noise bound {n.v}; trigger bounds must be >= sup|w|")

    if a.rate_main < 0 or a.rate_merging < 0:
        bad("arrivals.rate", "rates must be >= 0")
    if cfg.scripted is None and a.rate_main + a.rate_merging <= 0:
        bad("arrivals.rate", "at least one lane needs a positive rate")
    if not p.v_min <= a.v0_low <= a.v0_high <= p.v_max:
        bad("arrivals.v0_low/v0_high", "initial speed range must lie inside [v_min, v_max]")
    if a.n_vehicles < 0:
        bad("arrivals.n_vehicles", "must be >= 0")
    if len(cfg.fuel.omega) != 4 or len(cfg.fuel.r) != 3:
        bad("fuel", "need 4 omega and 3 r coefficients")

    if cfg.mode not in ("event", "time"):
        bad("mode", f"must be 'event' or 'time', got {cfg.mode!r}")
    if cfg.actuation not in ("ideal", "emulated"):
        bad("actuation", f"must be 'ideal' or 'emulated', got {cfg.actuation!r}")
    if cfg.entry_rule not in ("feasible", "barrier"):
        bad("entry_rule", f"must be 'feasible' or 'barrier', got {cfg.entry_rule!r}")
    if cfg.t_max <= 0:
        bad("t_max", "must be > 0")
    if cfg.scripted is not None:
        for k, arr in enumerate(cfg.scripted):
            if arr.t < 0:
                bad(f"scripted[{k}].t", "must be >= 0")
            if not p.v_min <= arr.v0 <= p.v_max:
                bad(f"scripted[{k}].v0", "must lie inside [v_min, v_max]")
            if not 0.0 <= arr.x0 < cfg.geometry.L:
                bad(f"scripted[{k}].x0", "must lie in [0, L)")
    return errs


def config_warnings(cfg: ScenarioConfig) -> list[str]:
    p = cfg.controller
    out = []
    if cfg.actuation == "emulated" and p.dt_actuation > p.dt_ctrl:
        out.append(f"dt_actuation={p.dt_actuation} exceeds dt_ctrl={p.dt_ctrl}; "
                   "inner loop is slower than the control update")
    return out


def check_config(cfg: ScenarioConfig) -> ScenarioConfig:
    errs = validate_config(cfg)
    if errs:
        raise ConfigError(errs)
    for w in config_warnings(cfg):
        log.warning(w)
    return cfg


_SECTIONS = {
    "geometry": CorridorGeometry,
    "controller": ControllerParams,
    "arrivals": ArrivalConfig,
    "noise": NoiseConfig,
}
_SCALARS = {"mode": str, "seed": int, "joint_min": bool, "actuation": str, "entry_rule": str,
            "t_max": float}


def config_from_dict(data: dict) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    errs, kwargs = [], {}
    for key, value in data.items():
        if key in _SECTIONS:
            cls = _SECTIONS[key]
            known = {f.name for f in fields(cls)}
            if not isinstance(value, dict):
                errs.append(f"{key}: must be a mapping")
                continue
            extra = set(value) - known
            if extra:
                errs.append(f"{key}: unknown keys {sorted(extra)}")
                continue
            kwargs[key] = cls(**value)
        elif key == "fuel":
            kwargs["fuel"] = FuelModel(omega=tuple(value.get("omega", DEFAULT_OMEGA)),
                                       r=tuple(value.get("r", DEFAULT_R)))
        elif key == "scripted":
            kwargs["scripted"] = tuple(_scripted_from(value))
        elif key in _SCALARS:
            kwargs[key] = _SCALARS[key](value)
        else:
            errs.append(f"{key}: unknown key")
    if errs:
        raise ConfigError(errs)
    return ScenarioConfig(**kwargs)


def _scripted_from(items) -> list[ScriptedArrival]:
    out = []
    for k, item in enumerate(items):
        try:
            extra = set(item) - {"t", "lane", "v0", "x0"}
            if extra:
                raise ValueError(f"unknown keys {sorted(extra)}")
            out.append(ScriptedArrival(float(item["t"]), Lane(item["lane"]), float(item["v0"]),
                                       float(item.get("x0", 0.0))))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"scripted[{k}]: {exc}") from None
    return out


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = yaml.safe_load(text) if text.strip() else {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return check_config(config_from_dict(data or {}))


def load_scripted(path) -> tuple:
    """Scripted arrivals file: YAML/JSON list of {t, lane, v0[, x0]}."""
    data = yaml.safe_load(Path(path).read_text())
    if isinstance(data, dict):
        data = data.get("scripted", [])
    return tuple(_scripted_from(data))


def dump_config(cfg: ScenarioConfig) -> str:
    return json.dumps(cfg.to_dict(), sort_keys=True, default=str)


class RngStreams:
    """Independent, named generators derived from one seed.

    Streams never share state, so enabling noise leaves arrivals and initial
    speeds untouched.
    """

    NAMES = ("arrivals_main", "arrivals_merging", "speeds", "noise")

    def __init__(self, seed: int):
        root = np.random.SeedSequence(seed)
        children = root.spawn(len(self.NAMES))
        self._gens = {name: np.random.default_rng(ss) for name, ss in zip(self.NAMES, children)}

    def __getitem__(self, name: str) -> np.random.Generator:
        return self._gens[name]
