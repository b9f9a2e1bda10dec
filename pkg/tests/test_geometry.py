"""Intersection layout: arc-length parameterization, merge points, zones."""

import math

import pytest

from intersim.geometry import (GeometryError, Movement, Zone,
                               build_intersection, conflict_points)


@pytest.fixture(scope="module")
def geom():
    return build_intersection(approach_length=300.0,
                              rescheduling_zone_length=219.0, area=30.0)


def test_counts(geom):
    assert len(geom.lanes) == 8
    assert len(geom.merging_points) == 24
    assert len(geom.trajectories) == 16  # 8 lanes x 2 movements each
    assert geom.half_width == pytest.approx(math.sqrt(30.0) / 2.0)


def test_lane_entry_names(geom):
    assert sorted(l.id for l in geom.lanes) == ["l%d" % i
                                                for i in range(1, 9)]
    assert sorted(l.entry for l in geom.lanes) == ["o%d" % i
                                                   for i in range(1, 9)]


def test_arc_length_parameterization(geom):
    for tr in geom.trajectories.values():
        s_vals = [0.0, 100.0, tr.approach_length - 1.0,
                  tr.approach_length + 0.25 * tr.box_path_length,
                  tr.approach_length + 0.9 * tr.box_path_length]
        h = 1e-4
        for s in s_vals:
            p0 = tr.point_at(s)
            p1 = tr.point_at(s + h)
            d = math.hypot(p1[0] - p0[0], p1[1] - p0[1])
            assert d == pytest.approx(h, rel=1e-3)


def test_straight_box_length_is_twice_half_width(geom):
    tr = geom.trajectories[("o1", Movement.STRAIGHT)]
    assert tr.box_path_length == pytest.approx(2.0 * geom.half_width)
    assert tr.total_length == pytest.approx(300.0 + 2.0 * geom.half_width)


def test_merge_points_lie_on_their_trajectories(geom):
    for tr in geom.trajectories.values():
        for mp_id, s in tr.mp_sequence:
            mp = geom.merge_point(mp_id)
            p = tr.point_at(s)
            assert math.hypot(p[0] - mp.position[0],
                              p[1] - mp.position[1]) < 1e-6
            assert tr.approach_length <= s <= tr.total_length + 1e-9


def test_mp_sequence_sorted(geom):
    for tr in geom.trajectories.values():
        dists = [s for _, s in tr.mp_sequence]
        assert dists == sorted(dists)


def test_perpendicular_straights_conflict(geom):
    a = geom.trajectories[("o1", Movement.STRAIGHT)]
    b = geom.trajectories[("o3", Movement.STRAIGHT)]
    assert conflict_points(a, b)


def test_opposite_straights_do_not_conflict(geom):
    a = geom.trajectories[("o1", Movement.STRAIGHT)]
    b = geom.trajectories[("o5", Movement.STRAIGHT)]
    assert not conflict_points(a, b)


def test_conflict_points_symmetric(geom):
    trs = list(geom.trajectories.values())
    for a in trs[:6]:
        for b in trs[:6]:
            assert conflict_points(a, b) == conflict_points(b, a)


def test_zone_of(geom):
    tr = geom.trajectories[("o1", Movement.STRAIGHT)]
    assert geom.zone_of(0.0, tr) == Zone.RESCHEDULING
    assert geom.zone_of(218.9, tr) == Zone.RESCHEDULING
    assert geom.zone_of(219.0, tr) == Zone.APPROACH
    assert geom.zone_of(299.9, tr) == Zone.APPROACH
    assert geom.zone_of(300.0, tr) == Zone.INTERSECTION
    assert geom.zone_of(tr.total_length, tr) == Zone.EXITED


def test_shared_path_length(geom):
    s = geom.trajectories[("o1", Movement.STRAIGHT)]
    l = geom.trajectories[("o1", Movement.LEFT)]
    other = geom.trajectories[("o3", Movement.STRAIGHT)]
    assert geom.shared_path_length(s, s) == pytest.approx(s.total_length)
    shared = geom.shared_path_length(s, l)
    assert geom.approach_length <= shared < s.total_length
    assert geom.shared_path_length(s, other) == 0.0


def test_invalid_dimensions_rejected():
    with pytest.raises(GeometryError):
        build_intersection(approach_length=-1.0)
    with pytest.raises(GeometryError):
        build_intersection(rescheduling_zone_length=300.0,
                           approach_length=300.0)
    with pytest.raises(GeometryError):
        build_intersection(area=-5.0)
    with pytest.raises(GeometryError):
        build_intersection(half_width=0.0)
