"""Control-zone layout: lanes, trajectories and merging points.

The intersection is a square box of side ``2 * half_width`` centered at the
origin, with four approach roads (east-, north-, west- and south-bound) of two
lanes each.  Lane centerlines sit at lateral offsets W/4 (inner / leftmost)
and 3W/4 (outer / rightmost) on the right-hand side of each road, where
W = half_width.  Movements: the inner lane may go straight or turn left
(quarter arc of radius W/2), the outer lane may go straight or turn right
(quarter arc of radius W/8).

This canonical layout yields exactly 24 merging points:

* 16 crossings of perpendicular straight lanes,
* 4 crossings between adjacent left-turn arcs,
* 4 tangent points where a right turn merges into the outer exit lane.

Merging points are labeled M1..M24 in ascending (y, x) order of their planar
position.  All per-vehicle distances are arc length along the vehicle's own
trajectory, measured from its control-zone entry.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

TOL = 1e-9


class Movement(str, enum.Enum):
    STRAIGHT = "straight"
    LEFT = "left"
    RIGHT = "right"


class Zone(str, enum.Enum):
    RESCHEDULING = "rescheduling"
    APPROACH = "approach"
    INTERSECTION = "intersection"
    EXITED = "exited"


class GeometryError(ValueError):
    """Raised when geometry parameters violate a construction bound."""


# Directions of travel, as rotation counts (multiples of 90 deg CCW) applied
# to the eastbound template.
_DIRECTIONS = ("E", "N", "W", "S")


def _rot(p, k):
    x, y = p
    for _ in range(k % 4):
        x, y = -y, x
    return (x, y)


@dataclass(frozen=True)
class _Segment:
    p0: tuple
    p1: tuple

    @property
    def length(self):
        return math.hypot(self.p1[0] - self.p0[0], self.p1[1] - self.p0[1])

    def point_at(self, s):
        t = s / self.length
        return (self.p0[0] + t * (self.p1[0] - self.p0[0]),
                self.p0[1] + t * (self.p1[1] - self.p0[1]))

    def heading_at(self, s):
        return math.atan2(self.p1[1] - self.p0[1], self.p1[0] - self.p0[0])

    def locate(self, p, tol):
        dx, dy = self.p1[0] - self.p0[0], self.p1[1] - self.p0[1]
        ln = self.length
        ux, uy = dx / ln, dy / ln
        rx, ry = p[0] - self.p0[0], p[1] - self.p0[1]
        s = rx * ux + ry * uy
        if s < -tol or s > ln + tol:
            return None
        perp = abs(-rx * uy + ry * ux)
        if perp > tol:
            return None
        return min(max(s, 0.0), ln)


@dataclass(frozen=True)
class _Arc:
    center: tuple
    radius: float
    theta0: float  # radians
    theta1: float  # radians; traversal from theta0 to theta1 (signed sweep)

    @property
    def length(self):
        return abs(self.theta1 - self.theta0) * self.radius

    def _theta_at(self, s):
        sweep = self.theta1 - self.theta0
        return self.theta0 + math.copysign(s / self.radius, sweep)

    def point_at(self, s):
        th = self._theta_at(s)
        return (self.center[0] + self.radius * math.cos(th),
                self.center[1] + self.radius * math.sin(th))

    def heading_at(self, s):
        th = self._theta_at(s)
        if self.theta1 >= self.theta0:  # CCW
            return th + math.pi / 2.0
        return th - math.pi / 2.0

    def locate(self, p, tol):
        dx, dy = p[0] - self.center[0], p[1] - self.center[1]
        if abs(math.hypot(dx, dy) - self.radius) > tol:
            return None
        th = math.atan2(dy, dx)
        sweep = self.theta1 - self.theta0
        rel = (th - self.theta0) * math.copysign(1.0, sweep)
        rel = (rel + math.pi) % (2 * math.pi) - math.pi
        atol = tol / self.radius
        if rel < -atol or rel > abs(sweep) + atol:
            return None
        return min(max(rel, 0.0), abs(sweep)) * self.radius


@dataclass(frozen=True)
class MergePoint:
    id: str
    position: tuple  # planar (x, y)


@dataclass(frozen=True)
class Trajectory:
    id: str
    entry: str          # o1..o8
    lane: str           # l1..l8
    movement: Movement
    exit_lane: str
    approach_length: float
    primitives: tuple   # in-box primitives, in travel order
    mp_sequence: tuple = field(default=())  # ((mp_id, arc distance), ...)

    @property
    def box_path_length(self):
        return sum(pr.length for pr in self.primitives)

    @property
    def total_length(self):
        return self.approach_length + self.box_path_length

    def merge_point_ids(self):
        return {mp for mp, _ in self.mp_sequence}

    def point_at(self, s):
        """Planar position at arc length s from the CZ entry."""
        L = self.approach_length
        if s < L:
            x0, y0 = self.primitives[0].point_at(0.0)
            h = self.primitives[0].heading_at(0.0)
            back = L - s
            return (x0 - back * math.cos(h), y0 - back * math.sin(h))
        rem = s - L
        for pr in self.primitives:
            if rem <= pr.length:
                return pr.point_at(rem)
            rem -= pr.length
        # past the exit: extend along the final heading
        last = self.primitives[-1]
        x1, y1 = last.point_at(last.length)
        h = last.heading_at(last.length)
        return (x1 + rem * math.cos(h), y1 + rem * math.sin(h))

    def heading_at(self, s):
        L = self.approach_length
        if s < L:
            return self.primitives[0].heading_at(0.0)
        rem = s - L
        for pr in self.primitives:
            if rem <= pr.length:
                return pr.heading_at(rem)
            rem -= pr.length
        last = self.primitives[-1]
        return last.heading_at(last.length)

    def locate_point(self, p, tol=1e-6):
        """Arc length from CZ entry at which the path passes p, or None."""
        offset = self.approach_length
        for pr in self.primitives:
            s = pr.locate(p, tol)
            if s is not None:
                return offset + s
            offset += pr.length
        return None


@dataclass(frozen=True)
class LaneDescriptor:
    id: str
    entry: str
    direction: str
    side: str  # "inner" | "outer"
    approach_length: float


@dataclass(frozen=True)
class IntersectionGeometry:
    approach_length: float        # L
    rescheduling_zone_length: float  # L1
    half_width: float             # W
    lanes: tuple                  # 8 LaneDescriptor
    merging_points: tuple         # 24 MergePoint
    trajectories: dict            # (entry, Movement) -> Trajectory

    def trajectory(self, traj_id):
        for tr in self.trajectories.values():
            if tr.id == traj_id:
                return tr
        raise KeyError(traj_id)

    def merge_point(self, mp_id):
        for mp in self.merging_points:
            if mp.id == mp_id:
                return mp
        raise KeyError(mp_id)

    def zone_of(self, x, traj):
        """Zone label for arc-length position x on trajectory traj."""
        if isinstance(traj, str):
            traj = self.trajectory(traj)
        if x < self.rescheduling_zone_length:
            return Zone.RESCHEDULING
        if x < self.approach_length:
            return Zone.APPROACH
        if x < traj.total_length:
            return Zone.INTERSECTION
        return Zone.EXITED

    def shared_path_length(self, traj_a, traj_b):
        """Length of the common path prefix of two same-lane trajectories.

        Zero when the trajectories start on different lanes.  Used to decide
        how long a rear-end constraint between them stays physically
        meaningful.
        """
        if traj_a.lane != traj_b.lane:
            return 0.0
        shared = traj_a.approach_length
        for pa, pb in zip(traj_a.primitives, traj_b.primitives):
            if pa == pb:
                shared += pa.length
            else:
                break
        return shared


def conflict_points(traj_a, traj_b):
    """Merge-point ids appearing in both trajectories' sequences."""
    return traj_a.merge_point_ids() & traj_b.merge_point_ids()


def _build_template(movement, side, W):
    """In-box primitives of the eastbound template for one movement."""
    inner, outer = -W / 4.0, -3.0 * W / 4.0
    if movement == Movement.STRAIGHT:
        y = inner if side == "inner" else outer
        return (_Segment((-W, y), (W, y)),)
    if movement == Movement.LEFT:
        # inner lane only: quarter arc radius W/2, CCW
        r = W / 2.0
        return (
            _Segment((-W, inner), (-W / 4.0, inner)),
            _Arc((-W / 4.0, W / 4.0), r, -math.pi / 2.0, 0.0),
            _Segment((W / 4.0, W / 4.0), (W / 4.0, W)),
        )
    if movement == Movement.RIGHT:
        # outer lane only: quarter arc radius W/8, CW
        r = W / 8.0
        c = (-7.0 * W / 8.0, -7.0 * W / 8.0)
        return (
            _Segment((-W, outer), (-7.0 * W / 8.0, outer)),
            _Arc(c, r, math.pi / 2.0, 0.0),
            _Segment((-3.0 * W / 4.0, -7.0 * W / 8.0), (-3.0 * W / 4.0, -W)),
        )
    raise ValueError(movement)


def _rotate_primitive(pr, k):
    if isinstance(pr, _Segment):
        return _Segment(_rot(pr.p0, k), _rot(pr.p1, k))
    return _Arc(_rot(pr.center, k), pr.radius,
                pr.theta0 + k * math.pi / 2.0, pr.theta1 + k * math.pi / 2.0)


def _merge_point_positions(W):
    """The 24 canonical merging-point positions (see module docstring)."""
    pts = []
    grid = (-3.0 * W / 4.0, -W / 4.0, W / 4.0, 3.0 * W / 4.0)
    for gx in grid:
        for gy in grid:
            pts.append((gx, gy))
    ll = ((math.sqrt(3.0) - 1.0) / 4.0 * W, 0.0)
    rt = (-3.0 * W / 4.0, -7.0 * W / 8.0)
    for k in range(4):
        pts.append(_rot(ll, k))
        pts.append(_rot(rt, k))
    return pts


# Exit-lane mapping for the eastbound template, as (direction offset, side):
# a left turn exits northbound on the inner lane, a right turn exits
# southbound on the outer lane, straight keeps direction and side.
_EXIT_RULE = {
    Movement.STRAIGHT: (0, None),
    Movement.LEFT: (1, "inner"),
    Movement.RIGHT: (3, "outer"),
}


def build_intersection(approach_length=300.0,
                       rescheduling_zone_length=219.0,
                       half_width=None,
                       area=30.0):
    """Construct the canonical 8-lane intersection geometry.

    ``half_width`` defaults to sqrt(area) / 2 (the intersection box has side
    2 * half_width).  Raises GeometryError on invalid dimensions.
    """
    L = float(approach_length)
    L1 = float(rescheduling_zone_length)
    if half_width is None:
        if area <= 0:
            raise GeometryError("intersection area must be > 0, got %r" % area)
        W = math.sqrt(float(area)) / 2.0
    else:
        W = float(half_width)
    if W <= 0:
        raise GeometryError("half-width must be > 0, got %r" % W)
    if L <= 0:
        raise GeometryError("approach length L must be > 0, got %r" % L)
    if not 0 < L1 < L:
        raise GeometryError(
            "rescheduling zone length must satisfy 0 < L1 < L "
            "(got L1=%r, L=%r)" % (L1, L))

    lanes = []
    lane_of = {}
    for d, name in enumerate(_DIRECTIONS):
        for j, side in enumerate(("inner", "outer")):
            idx = 2 * d + j + 1
            lane = LaneDescriptor(id="l%d" % idx, entry="o%d" % idx,
                                  direction=name, side=side,
                                  approach_length=L)
            lanes.append(lane)
            lane_of[(name, side)] = lane

    trajectories = {}
    for d, name in enumerate(_DIRECTIONS):
        for side, movements in (("inner", (Movement.STRAIGHT, Movement.LEFT)),
                                ("outer", (Movement.STRAIGHT, Movement.RIGHT))):
            lane = lane_of[(name, side)]
            for mv in movements:
                prims = tuple(_rotate_primitive(pr, d)
                              for pr in _build_template(mv, side, W))
                doff, xside = _EXIT_RULE[mv]
                exit_lane = lane_of[(_DIRECTIONS[(d + doff) % 4],
                                     xside or side)]
                trajectories[(lane.entry, mv)] = Trajectory(
                    id="%s_%s" % (lane.entry, mv.value),
                    entry=lane.entry, lane=lane.id, movement=mv,
                    exit_lane=exit_lane.id, approach_length=L,
                    primitives=prims)

    positions = _merge_point_positions(W)
    positions.sort(key=lambda p: (p[1], p[0]))
    mps = tuple(MergePoint(id="M%d" % (i + 1), position=p)
                for i, p in enumerate(positions))

    tol = 1e-9 * max(1.0, W)
    located = {}
    for key, tr in trajectories.items():
        seq = []
        for mp in mps:
            s = tr.locate_point(mp.position, tol)
            if s is not None:
                seq.append((mp.id, s))
        seq.sort(key=lambda e: e[1])
        located[key] = tuple(seq)
    trajectories = {key: Trajectory(
        id=tr.id, entry=tr.entry, lane=tr.lane, movement=tr.movement,
        exit_lane=tr.exit_lane, approach_length=tr.approach_length,
        primitives=tr.primitives, mp_sequence=located[key])
        for key, tr in trajectories.items()}

    geom = IntersectionGeometry(
        approach_length=L, rescheduling_zone_length=L1, half_width=W,
        lanes=tuple(lanes), merging_points=mps, trajectories=trajectories)
    _validate(geom)
    return geom


def _validate(geom):
    referenced = set()
    for tr in geom.trajectories.values():
        dists = [s for _, s in tr.mp_sequence]
        for s in dists:
            if not geom.approach_length < s < tr.total_length:
                raise GeometryError(
                    "merge point at arc length %r outside (L, total) for %s"
                    % (s, tr.id))
        if any(b - a <= 0 for a, b in zip(dists, dists[1:])):
            raise GeometryError("non-increasing MP distances on %s" % tr.id)
        referenced.update(tr.merge_point_ids())
    if referenced != {mp.id for mp in geom.merging_points}:
        raise GeometryError("unreferenced merging points: %s" %
                            sorted({mp.id for mp in geom.merging_points}
                                   - referenced))
    for mp in geom.merging_points:
        users = [tr for tr in geom.trajectories.values()
                 if mp.id in tr.merge_point_ids()]
        if len(users) < 2:
            raise GeometryError("merge point %s shared by < 2 trajectories"
                                % mp.id)
