"""Vision footprints, ground-truth visibility and noisy state estimates.

A vehicle's pose is reconstructed from its trajectory (position at its arc
length, heading along the tangent); the sensor footprint is a disc sector of
radius r and full opening angle theta centered on the heading.  Fake vehicles
have no physical body and therefore never appear in any visible set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class SensorSpec:
    radius: float = 30.0
    fov: float = 2.0 * math.pi   # total opening angle [rad]
    epsilon: float = 0.0         # l-inf noise bound on estimates

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("sensor radius must be > 0")
        if not 0.0 <= self.fov <= 2.0 * math.pi + 1e-12:
            raise ValueError("field of view must lie in [0, 2*pi]")
        if self.epsilon < 0:
            raise ValueError("noise bound must be >= 0")


@dataclass(frozen=True)
class Observation:
    observer: str
    observed: str
    x_est: float
    v_est: float
    t: float


def pose_of(traj, x):
    """(px, py, heading) of a vehicle at arc length x on its trajectory."""
    px, py = traj.point_at(x)
    return px, py, traj.heading_at(x)


def in_footprint(pose, point, sensor):
    px, py, heading = pose
    dx, dy = point[0] - px, point[1] - py
    dist = math.hypot(dx, dy)
    if dist > sensor.radius:
        return False
    if dist < 1e-12 or sensor.fov >= 2.0 * math.pi - 1e-12:
        return True
    bearing = math.atan2(dy, dx) - heading
    bearing = (bearing + math.pi) % (2.0 * math.pi) - math.pi
    return abs(bearing) <= sensor.fov / 2.0 + 1e-12


def visible_set(observer_id, poses, body_ids, sensor):
    """Ids of physically present vehicles inside observer's footprint.

    ``poses`` maps id -> (px, py, heading) of true poses; ``body_ids`` lists
    the vehicles that actually have a body (fake ones never do).
    """
    pose = poses[observer_id]
    out = set()
    for j in body_ids:
        if j == observer_id:
            continue
        if in_footprint(pose, poses[j][:2], sensor):
            out.add(j)
    return out


def observe(observer_id, observed_id, true_x, true_v, sensor, rng, t=0.0):
    """Noisy estimate of (x, v), uniform on the l-inf ball of radius eps."""
    eps = sensor.epsilon
    if eps > 0.0:
        wx = rng.uniform(-eps, eps)
        wv = rng.uniform(-eps, eps)
    else:
        wx = wv = 0.0
    return Observation(observer=observer_id, observed=observed_id,
                       x_est=true_x + wx, v_est=true_v + wv, t=t)


def expected_observers(subject_id, reported_poses, sensors):
    """Who should see the subject, judging from everyone's reports.

    The coordinator evaluates each vehicle's sensor footprint at its
    *reported* pose against the subject's *reported* position.
    """
    point = reported_poses[subject_id][:2]
    out = set()
    for j, pose in reported_poses.items():
        if j == subject_id:
            continue
        if in_footprint(pose, point, sensors[j]):
            out.add(j)
    return out
