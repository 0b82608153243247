import json

import numpy as np
import pytest
import yaml

from cavmerge.config import (RngStreams, ScenarioConfig, ScriptedArrival, check_config, config_from_dict,
                             config_warnings, dump_config, load_config, load_scripted, validate_config)
from cavmerge.model import ConfigError, Lane


def test_defaults_are_valid():
    assert validate_config(ScenarioConfig()) == []
    assert config_warnings(ScenarioConfig()) == []


def test_trigger_bounds_must_dominate_noise():
    cfg = config_from_dict({"noise": {"x": 0.3, "v": 0.0}})
    errs = validate_config(cfg)
    assert any(e.startswith("controller.s_x") for e in errs)


@pytest.mark.parametrize("data, path", [
    ({"controller": {"alpha": 1.0}}, "controller.alpha"),
    ({"controller": {"u_min": 1.0}}, "controller.u_min/u_max"),
    ({"controller": {"v_min": 2.0}}, "controller.v_min/v_max"),
    ({"geometry": {"L": -1.0}}, "geometry.L"),
    ({"mode": "sometimes"}, "mode"),
    ({"entry_rule": "whatever"}, "entry_rule"),
    ({"actuation": "magic"}, "actuation"),
    ({"scripted": [{"t": 0, "lane": "main", "v0": 0.5, "x0": 5.0}]}, "scripted[0].x0"),
])
def test_invalid_fields_are_named(data, path):
    errs = validate_config(config_from_dict(data))
    assert any(e.startswith(path + ":") for e in errs), errs


def test_check_config_raises_with_all_errors():
    cfg = config_from_dict({"controller": {"alpha": 2.0, "lam": -1.0}})
    with pytest.raises(ConfigError) as exc:
        check_config(cfg)
    assert len(exc.value.errors) >= 2


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="unknown"):
        config_from_dict({"controller": {"gamma": 1}})
    with pytest.raises(ConfigError, match="unknown"):
        config_from_dict({"colour": "red"})
    with pytest.raises(ConfigError, match="scripted"):
        config_from_dict({"scripted": [{"t": 0, "lane": "main", "v0": 0.5, "speed": 1}]})


def test_yaml_round_trip(tmp_path):
    cfg = ScenarioConfig().with_controller(alpha=0.4).with_(
        mode="time", scripted=(ScriptedArrival(0.0, Lane.MAIN, 0.5, 0.2),))
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(json.loads(dump_config(cfg))))
    assert load_config(path) == cfg


def test_empty_file_gives_defaults(tmp_path):
    path = tmp_path / "empty.yaml"
    path.write_text("")
    assert load_config(path) == ScenarioConfig()


def test_missing_file_is_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.yaml")


def test_load_scripted_accepts_list_or_mapping(tmp_path):
    p1, p2 = tmp_path / "a.yaml", tmp_path / "b.yaml"
    p1.write_text("- {t: 0, lane: main, v0: 0.5}\n")
    p2.write_text("scripted:\n  - {t: 1, lane: merging, v0: 0.4, x0: 0.3}\n")
    assert load_scripted(p1) == (ScriptedArrival(0.0, Lane.MAIN, 0.5, 0.0),)
    assert load_scripted(p2) == (ScriptedArrival(1.0, Lane.MERGING, 0.4, 0.3),)


def test_shipped_configs_load():
    from pathlib import Path
    for path in sorted((Path(__file__).parent.parent / "configs").glob("*.yaml")):
        load_config(path)


def test_rng_streams_are_independent_and_reproducible():
    a, b = RngStreams(7), RngStreams(7)
    b["noise"].uniform(size=1000)  # drawing noise must not shift the other streams
    for name in ("arrivals_main", "arrivals_merging", "speeds"):
        assert np.array_equal(a[name].uniform(size=5), b[name].uniform(size=5))
    c = RngStreams(8)
    assert not np.array_equal(RngStreams(7)["speeds"].uniform(size=5), c["speeds"].uniform(size=5))


def test_emulated_actuation_warning():
    cfg = ScenarioConfig().with_(actuation="emulated").with_controller(dt_actuation=0.5)
    assert config_warnings(cfg)
