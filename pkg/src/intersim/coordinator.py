"""Queue table, conflict search and rescheduling decisions.

The coordinator keeps the first-in-first-out queue of vehicles inside the
control zone (index 1 = first to cross), derives each vehicle's conflicting
predecessors from reported states, and decides when and how to reorder the
queue:

* trust-triggered reordering, weighted by (1 - trust), when distrusted
  vehicles pile up in the rescheduling zone;
* lane-priority reordering, weighted against lanes blocked by slow vehicles;
* mitigation reordering, which pushes flagged fake vehicles to the back of
  the queue.

Only vehicles still inside the rescheduling zone (plus flagged fakes, which
have no body to move) may receive a new index, and nobody can be promoted
ahead of a vehicle that has already left that zone.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .dynamics import CostAccumulator, VehicleState
from .geometry import Zone
from .perception import SensorSpec
from .scheduling import ScheduleError, ScheduleProblem, solve_schedule
from .trust import TrustState, VERDICT_NONE

INF = float("inf")

KIND_REAL = "real"
KIND_FAKE = "fake"
KIND_UNCOOPERATIVE = "uncooperative"


@dataclass
class CavRecord:
    cav_id: str
    kind: str
    traj: object                 # geometry.Trajectory
    arrival_time: float
    index: int = 0
    state: VehicleState = None   # true state; mirrors reports for fakes
    rep_x: float = 0.0
    rep_v: float = 0.0
    rep_u: float = 0.0
    trust: TrustState = field(default_factory=TrustState)
    verdict: str = VERDICT_NONE
    cost: CostAccumulator = field(default_factory=CostAccumulator)
    sensor: SensorSpec = field(default_factory=SensorSpec)
    v_low: float = None          # uncooperative crawl speed
    reporter: object = None      # threats.FakeReporter for fakes
    exited: bool = False
    exit_time: float = None
    last_report_time: float = 0.0
    overtaking: str = None       # id of the flagged fake being passed
    prev_rep: tuple = None       # (x, v) of the previous report
    init_checked: bool = False   # initial-condition check already consumed
    flag_time: float = None      # when the fake verdict landed
    min_rear_b: float = INF      # worst true rear-end margin seen so far
    min_merge_b: float = INF     # worst true merging margin seen so far
    enforced_merges: set = field(default_factory=set)  # (mp, pred) gap rows

    @property
    def flagged_fake(self):
        return self.verdict == "fake"

    def mp_distance(self, mp_id):
        for mid, dist in self.traj.mp_sequence:
            if mid == mp_id:
                return dist
        raise KeyError(mp_id)


@dataclass(frozen=True)
class ConflictInfo:
    rear: tuple                  # predecessor records, nearest first
    merges: dict                 # mp_id -> predecessor records, nearest first


class Coordinator:
    def __init__(self, geometry, trust_params, nu=1, limits=None,
                 min_gap=3.78):
        self.geometry = geometry
        self.trust_params = trust_params
        self.nu = nu
        self.limits = limits
        self.min_gap = min_gap   # stop margin before a merging point [m]
        self.records = {}

    # -- queue table ------------------------------------------------------

    def active(self):
        return sorted((r for r in self.records.values() if not r.exited),
                      key=lambda r: r.index)

    def register(self, rec):
        if rec.cav_id in self.records:
            raise ValueError("duplicate vehicle id %r" % rec.cav_id)
        rec.index = 1 + max((r.index for r in self.records.values()
                             if not r.exited), default=0)
        self.records[rec.cav_id] = rec

    def release(self, rec, t):
        """Mark rec exited and close the index gap it leaves."""
        gone = rec.index
        rec.exited = True
        rec.exit_time = t
        for r in self.records.values():
            if not r.exited and r.index > gone:
                r.index -= 1

    def apply_assignment(self, assignment):
        by_index = {r.index: r for r in self.active()}
        for cur, new in assignment.items():
            by_index[cur].index = new

    def swap_indices(self, rec_a, rec_b):
        rec_a.index, rec_b.index = rec_b.index, rec_a.index

    def zone(self, rec):
        return self.geometry.zone_of(rec.rep_x, rec.traj)

    # -- conflict search --------------------------------------------------

    def rear_chain(self, rec):
        """Same-lane vehicles ahead of rec, nearest first.

        A predecessor drops out of the chain once it has passed the end of
        the path prefix it shares with rec (the trajectories diverge there).
        """
        out = []
        for r in self.active():
            if r is rec or r.traj.lane != rec.traj.lane:
                continue
            if r.rep_x <= rec.rep_x:
                continue
            if r.rep_x >= self.geometry.shared_path_length(rec.traj, r.traj):
                continue
            out.append(r)
        out.sort(key=lambda r: (r.rep_x, -r.index))
        return out

    def merge_chain(self, rec, mp_id):
        """Lower-index vehicles from other lanes still bound for mp_id."""
        out = []
        for r in self.active():
            if r is rec or r.index >= rec.index:
                continue
            if r.traj.lane == rec.traj.lane:
                continue
            if mp_id not in r.traj.merge_point_ids():
                continue
            if r.rep_x >= r.mp_distance(mp_id):
                continue
            out.append(r)
        out.sort(key=lambda r: -r.index)
        return out

    def search(self, chain, trust_based):
        """Constraint targets along one ordered predecessor chain.

        Default search keeps the nearest predecessor only.  The trust-based
        search walks down the chain past every distrusted vehicle and stops
        at (and includes) the first trusted one, so a real follower stays
        constrained by real traffic even when the nearest predecessors are
        suspect.
        """
        if not trust_based:
            return tuple(chain[:1])
        threshold = 1.0 - self.trust_params.delta
        out = []
        for r in chain:
            out.append(r)
            if r.trust.tau >= threshold:
                break
        return tuple(out)

    def conflict_info(self, rec, trust_based):
        rear = self.search(self.rear_chain(rec), trust_based)
        merges = {}
        for mp_id in sorted(rec.traj.merge_point_ids()):
            targets = self.search(self.merge_chain(rec, mp_id), trust_based)
            if targets:
                merges[mp_id] = targets
        return ConflictInfo(rear=rear, merges=merges)

    # -- rescheduling -----------------------------------------------------

    def _reschedulable(self):
        return [r for r in self.active()
                if self.zone(r) == Zone.RESCHEDULING]

    def _can_yield(self, rec):
        """Whether rec could still stop short of its next merging point.

        If it can, a later vehicle may safely be promoted ahead of it even
        though rec itself is past the rescheduling zone; rec absorbs the new
        precedence through its own constraints.
        """
        upcoming = [dist for _, dist in rec.traj.mp_sequence
                    if dist > rec.rep_x]
        if not upcoming:
            return True
        if self.limits is None:
            return False
        # one sampling step of worst-case motion as slack: the stop row the
        # promotion induces is only enforced from the next control step
        slack = rec.rep_v * 0.2 + 1.0
        stop = (rec.rep_v ** 2 / (2.0 * 0.9 * abs(self.limits.u_min))
                + self.min_gap + slack)
        return min(upcoming) - rec.rep_x > stop

    def _base_problem(self, candidates, weights, extra_exempt=()):
        """Precedence rows and floors shared by every reordering scheme.

        Same-lane candidates keep their physical order.  A vehicle that is
        past the rescheduling zone and can no longer yield before its next
        merging point pins everyone currently behind it: no candidate may be
        promoted ahead of it, except flagged fakes listed in extra_exempt
        (they have no body and only move back).
        """
        cand_ids = sorted(r.index for r in candidates)
        cset = set(cand_ids)
        precedence = []
        for a in candidates:
            if a.flagged_fake:
                # no body: same-lane order against it is not physical
                continue
            for b in candidates:
                if (a.traj.lane == b.traj.lane and a.index != b.index
                        and not b.flagged_fake and a.rep_x < b.rep_x):
                    precedence.append((a.index, b.index))  # a after b
        exempt = {r.index for r in extra_exempt}
        outside = [r for r in self.active() if r.index not in cset]
        fixed = [r for r in outside if not self._can_yield(r)]
        floors = {}
        for r in candidates:
            if r.index in exempt:
                continue
            blocking = [x.index + self.nu for x in fixed
                        if x.index < r.index]
            # a same-lane body ahead can never be passed, whatever the
            # schedule says; promoting r above its index would deadlock the
            # rear-end and merging waits into a cycle
            blocking += [x.index + self.nu for x in outside
                         if x.traj.lane == r.traj.lane
                         and not x.flagged_fake
                         and x.rep_x > r.rep_x and x.index < r.index]
            if blocking:
                floors[r.index] = max(blocking)
        return ScheduleProblem(candidates=tuple(cand_ids), weights=weights,
                               precedence=tuple(precedence), nu=self.nu,
                               floors=floors)

    def _solve(self, problem):
        try:
            return solve_schedule(problem)
        except ScheduleError:
            return None

    def trust_reschedule(self, trigger_fraction):
        """Reordering weighted by distrust, when enough of the queue earned
        it: trigger on the share of rescheduling-zone vehicles whose trust
        is below delta and still not recovering."""
        delta = self.trust_params.delta
        suspects = [r for r in self._reschedulable()
                    if r.trust.tau <= delta
                    and (r.trust.tau_prev is None
                         or r.trust.tau <= r.trust.tau_prev)]
        act = self.active()
        if not act or len(suspects) < trigger_fraction * len(act):
            return None
        candidates = self._reschedulable()
        if len(candidates) < 2:
            return None
        weights = {r.index: 1.0 - r.trust.tau for r in candidates}
        return self._solve(self._base_problem(candidates, weights))

    def lane_slow_sets(self, v_low):
        """Per-lane sets of vehicles stuck behind their own lane.

        A vehicle counts against its lane when it is slow and none of its
        merge-conflict predecessors from other lanes is slow; slowness
        caused by cross traffic is that traffic's problem, not the lane's.
        """
        sets = {lane.id: [] for lane in self.geometry.lanes}
        for r in self.active():
            if r.rep_v > v_low:
                continue
            slow_conflict = False
            for mp_id in sorted(r.traj.merge_point_ids()):
                for p in self.merge_chain(r, mp_id):
                    if p.rep_v <= v_low:
                        slow_conflict = True
                        break
                if slow_conflict:
                    break
            if not slow_conflict:
                sets[r.traj.lane].append(r.cav_id)
        return sets

    def lane_priorities(self, v_low, c=1.0):
        """zeta per lane: 1 minus its share of lane-attributable slowness."""
        sets = self.lane_slow_sets(v_low)
        total = sum(len(v) for v in sets.values()) + c
        return {lane: 1.0 - len(v) / total for lane, v in sets.items()}

    def lane_reschedule(self, v_low, trigger_fraction, c=1.0):
        """Reordering that promotes lanes blocked by slow vehicles.

        Triggered when the slow share of the whole queue reaches the
        threshold; weights are the complements of the lane priorities, so a
        lane hosting more stuck vehicles pulls its members forward.
        """
        act = self.active()
        if not act:
            return None
        slow = [r for r in act if r.rep_v <= v_low]
        if len(slow) < trigger_fraction * len(act):
            return None
        candidates = self._reschedulable()
        if len(candidates) < 2:
            return None
        zeta = self.lane_priorities(v_low, c)
        weights = {r.index: 1.0 - zeta[r.traj.lane] for r in candidates}
        return self._solve(self._base_problem(candidates, weights))

    def mitigation_reschedule(self):
        """Push flagged fakes to the back of the queue.

        Fakes have no body, so they may move regardless of zone; real
        vehicles join the candidate set only while still reschedulable, and
        only those currently queued behind the foremost flagged fake.
        """
        fakes = [r for r in self.active() if r.flagged_fake]
        if not fakes:
            return None
        front = min(r.index for r in fakes)
        movable = [r for r in self._reschedulable()
                   if not r.flagged_fake and r.index > front]
        candidates = fakes + movable
        if len(candidates) < 2:
            return None
        weights = {r.index: 1.0 if r.flagged_fake else 0.0
                   for r in candidates}
        return self._solve(self._base_problem(candidates, weights,
                                              extra_exempt=fakes))

    # -- overtake of flagged fakes ---------------------------------------

    def overtake_complete(self, follower, target, gains):
        """True once follower clears the fake's reported slot ahead of it."""
        gap = (follower.rep_x - target.rep_x
               - gains.phi * target.rep_v - gains.delta)
        return gap >= 0.0
