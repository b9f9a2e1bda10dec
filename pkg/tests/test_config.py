"""Scenario schema: defaults, strict keys, physical-bound rejection."""

import json
import math

import pytest

from intersim.config import (ConfigError, braking_clearance,
                             check_reschedule_bound, load_config,
                             parse_config)


def test_empty_config_uses_defaults():
    cfg = parse_config({})
    assert cfg.run.ts == 0.1
    assert cfg.geometry.approach_length == 300.0
    assert cfg.control.phi == 1.8
    assert cfg.limits.u_min == pytest.approx(-5.886)


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError):
        parse_config({"run": {"tss": 0.1}})
    with pytest.raises(ConfigError):
        parse_config({"runn": {}})


def test_braking_clearance_value():
    cfg = parse_config({})
    expect = 30.0 ** 2 / (2.0 * 5.886) + 3.78
    assert braking_clearance(cfg) == pytest.approx(expect)
    assert braking_clearance(cfg) == pytest.approx(80.23, abs=0.01)


def test_reschedule_bound_rejected_at_load():
    # L - L1 = 150 - 100 = 50 m < 80.23 m: physically unservable reorder
    raw = {"geometry": {"approach_length": 150.0,
                        "rescheduling_zone_length": 100.0},
           "reschedule": {"enabled": True}}
    with pytest.raises(ConfigError):
        parse_config(raw)


def test_reschedule_bound_accepted_at_the_limit():
    cfg = parse_config({})
    need = braking_clearance(cfg)
    raw = {"geometry": {"approach_length": 150.0,
                        "rescheduling_zone_length": 150.0 - need},
           "reschedule": {"enabled": True}}
    parse_config(raw)  # exactly at the bound: accepted


def test_reschedule_bound_irrelevant_without_rescheduling():
    raw = {"geometry": {"approach_length": 150.0,
                        "rescheduling_zone_length": 100.0}}
    parse_config(raw)


def test_zone_must_end_before_intersection():
    with pytest.raises(ConfigError):
        parse_config({"geometry": {"approach_length": 100.0,
                                   "rescheduling_zone_length": 100.0}})


def test_schedule_validation():
    with pytest.raises(ConfigError):
        parse_config({"arrivals": {"schedule": [
            {"time": 0.0, "lane": "l99", "movement": "straight",
             "v0": 10.0}]}})
    with pytest.raises(ConfigError):
        parse_config({"arrivals": {"schedule": [
            {"time": 0.0, "lane": "l1", "movement": "uturn", "v0": 10.0}]}})
    with pytest.raises(ConfigError):
        parse_config({"arrivals": {"schedule": [
            {"time": 0.0, "lane": "l1", "movement": "straight",
             "v0": 99.0}]}})
    with pytest.raises(ConfigError):
        parse_config({"arrivals": {"schedule": [
            {"time": 0.0, "lane": "l1", "movement": "straight", "v0": 10.0,
             "kind": "ghost"}]}})
    # inner lanes go straight or left, never right
    with pytest.raises(ConfigError):
        parse_config({"arrivals": {"schedule": [
            {"time": 0.0, "lane": "l1", "movement": "right", "v0": 10.0}]}})


def test_attacker_spawn_validation():
    with pytest.raises(ConfigError):
        parse_config({"attacker": {"spawns": [
            {"time": 0.0, "entry": "o99", "movement": "straight",
             "model": "strategic"}]}})


def test_load_config_errors(tmp_path):
    missing = tmp_path / "nope.json"
    with pytest.raises(ConfigError):
        load_config(str(missing))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(str(bad))
    li = tmp_path / "list.json"
    li.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_config(str(li))


def test_bundled_scenarios_load():
    import glob
    import os
    root = os.path.join(os.path.dirname(__file__), "..", "scenarios")
    paths = sorted(glob.glob(os.path.join(root, "*.json")))
    assert len(paths) >= 5
    for path in paths:
        load_config(path)
