"""Sensor footprints, visibility, noisy estimates, expected observers."""

import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from intersim.perception import (Observation, SensorSpec, expected_observers,
                                 in_footprint, observe, pose_of, visible_set)


def test_sensor_validation():
    with pytest.raises(ValueError):
        SensorSpec(radius=0.0)
    with pytest.raises(ValueError):
        SensorSpec(fov=-1.0)
    with pytest.raises(ValueError):
        SensorSpec(epsilon=-0.1)


def test_in_footprint_radius():
    sensor = SensorSpec(radius=10.0)
    pose = (0.0, 0.0, 0.0)
    assert in_footprint(pose, (9.9, 0.0), sensor)
    assert not in_footprint(pose, (10.1, 0.0), sensor)


def test_in_footprint_fov():
    sensor = SensorSpec(radius=10.0, fov=math.pi / 2.0)  # +/- 45 degrees
    pose = (0.0, 0.0, 0.0)  # facing +x
    assert in_footprint(pose, (5.0, 0.0), sensor)
    assert in_footprint(pose, (5.0, 4.9), sensor)       # ~44.4 degrees
    assert not in_footprint(pose, (0.0, 5.0), sensor)    # 90 degrees
    assert not in_footprint(pose, (-5.0, 0.0), sensor)   # behind


def test_visible_set_skips_bodiless_ids():
    sensor = SensorSpec(radius=50.0)
    poses = {"a": (0.0, 0.0, 0.0), "b": (10.0, 0.0, 0.0),
             "f": (5.0, 0.0, 0.0)}
    vis = visible_set("a", poses, ["a", "b"], sensor)
    assert vis == {"b"}  # "f" has no body and is invisible


def test_observe_noise_bounded_and_seed_deterministic():
    sensor = SensorSpec(radius=30.0, epsilon=0.5)
    obs1 = observe("a", "b", 10.0, 5.0, sensor, random.Random(3), t=1.0)
    obs2 = observe("a", "b", 10.0, 5.0, sensor, random.Random(3), t=1.0)
    assert obs1 == obs2
    assert abs(obs1.x_est - 10.0) <= 0.5
    assert abs(obs1.v_est - 5.0) <= 0.5


def test_observe_noise_free_is_exact():
    sensor = SensorSpec(radius=30.0, epsilon=0.0)
    obs = observe("a", "b", 10.0, 5.0, sensor, random.Random(0))
    assert obs == Observation("a", "b", 10.0, 5.0, 0.0)


def test_expected_observers_from_reported_poses():
    sensors = {"a": SensorSpec(radius=10.0), "b": SensorSpec(radius=100.0),
               "s": SensorSpec(radius=100.0)}
    reported = {"a": (0.0, 0.0, 0.0), "b": (50.0, 0.0, math.pi),
                "s": (200.0, 0.0, 0.0)}
    exp = expected_observers("a", reported, sensors)
    assert exp == {"b"}  # s is out of range; a never expects itself


@settings(max_examples=100, deadline=None)
@given(st.floats(-20.0, 20.0), st.floats(-20.0, 20.0),
       st.floats(0.0, 2.0 * math.pi))
def test_full_circle_fov_ignores_heading(px, py, heading):
    sensor = SensorSpec(radius=30.0)
    near = (px + 1.0, py + 1.0)
    assert in_footprint((px, py, heading), near, sensor)
