"""Simulation loop, safety metrics and run outputs.

Each step executes a fixed phase order so runs are reproducible:

  1. departures, arrivals and fake spawns
  2. state reports (true for real vehicles, fabricated for fakes)
  3. perception: visibility from true poses, noisy cross-estimates
  4. behavioral checks and trust updates from the start-of-step snapshot
  5. fake verdicts, mitigation reordering and overtake bookkeeping
  6. scheme-triggered queue reordering
  7. conflict search per vehicle
  8. safety-filtered control for every physical vehicle
  9. exact dynamics integration and merge-crossing safety metrics

Outputs per run: trace.csv (one row per vehicle per step), events.jsonl and
summary.json with aggregate cost, safety and detection figures.
"""

from __future__ import annotations

import json
import math
import os

import numpy as np

from . import dynamics, perception
from .config import check_reschedule_bound
from .controller import (Gains, build_program, hold_constraint,
                         merging_constraint, rear_end_constraint,
                         reference_control, solve_step)
from .coordinator import (INF, KIND_FAKE, KIND_REAL, KIND_UNCOOPERATIVE,
                          CavRecord, Coordinator)
from .geometry import Movement
from .threats import FakeReporter, uncooperative_override
from .trust import (CheckResult, EvidenceVector, VERDICT_FAKE,
                    detect_fake, update_trust)

SCHEMES = ("fifo", "trust", "lane", "both")

TRACE_COLUMNS = ("t", "cav_id", "index", "zone", "x", "v", "u", "x_rep",
                 "v_rep", "tau", "R", "P", "verdict", "min_rear_b",
                 "min_merge_b")

_REPORT_TIMEOUT = 1.0   # seconds of silence before a fake is dropped
_CHECK_TOL = 1e-6
_RULE_TOL = 0.25        # rear-gap slack [m] for the sampled-data controller


def _fmt(value):
    if value is None or value == INF or value == -INF:
        return ""
    return "%.6f" % value


class Simulation:
    def __init__(self, cfg, scheme="fifo", mitigation=None, seed=None):
        if scheme not in SCHEMES:
            raise ValueError("unknown scheme %r" % scheme)
        if scheme != "fifo":
            check_reschedule_bound(cfg)
        self.cfg = cfg
        self.scheme = scheme
        self.trust_search = scheme in ("trust", "both")
        self.mitigation = (cfg.mitigation.enabled if mitigation is None
                           else mitigation)
        self.seed = cfg.run.seed if seed is None else seed
        self.rng = np.random.default_rng(self.seed)
        self.geom = cfg.geometry.build()
        self.gains = Gains(phi=cfg.control.phi, delta=cfg.control.delta,
                           k_rear=cfg.control.k_rear,
                           k_merge=cfg.control.k_merge,
                           k_limit=cfg.control.k_limit,
                           c3=cfg.control.c3, lam=cfg.control.lam,
                           sample_pad=cfg.run.ts / 2.0,
                           disc_margin=abs(cfg.limits.u_min)
                           * cfg.run.ts / 2.0)
        self.coord = Coordinator(self.geom, cfg.trust, nu=cfg.reschedule.nu,
                                 limits=cfg.limits,
                                 min_gap=cfg.control.delta)
        self.lane_by_id = {lane.id: lane for lane in self.geom.lanes}
        self.t = 0.0
        self.events = []
        self.trace = []
        self.exited = []
        self.last_u = {}
        self.last_reschedule = -INF
        self.reschedule_counts = {"trust": 0, "lane": 0, "mitigation": 0}
        self.fallback_steps = 0
        self.min_rear_b = INF
        self.min_merge_b = INF
        self.min_crossing_margin = INF
        self.pending = self._generate_arrivals()
        self.steps_run = 0

    # -- scenario population ----------------------------------------------

    def _traj_for(self, entry, movement):
        return self.geom.trajectories[(entry, Movement(movement))]

    def _generate_arrivals(self):
        cfg = self.cfg
        entries = []
        for sp in cfg.arrivals.schedule:
            entries.append({"time": sp.time, "lane": sp.lane,
                            "movement": sp.movement, "v0": sp.v0,
                            "kind": sp.kind,
                            "v_low": sp.v_low or cfg.uncooperative.v_low})
        for lane_id in sorted(cfg.arrivals.lanes):
            lane = self.lane_by_id[lane_id]
            moves = ["straight"]
            if lane.side == "inner":
                moves.append("left")
            else:
                moves.append("right")
            t = 0.0
            for _ in range(cfg.arrivals.count):
                if cfg.arrivals.rate_per_lane > 0:
                    gap = self.rng.exponential(1.0 / cfg.arrivals.rate_per_lane)
                else:
                    gap = cfg.arrivals.min_headway
                t += max(gap, cfg.arrivals.min_headway)
                lo, hi = cfg.arrivals.v0_range
                v0 = lo if lo == hi else float(self.rng.uniform(lo, hi))
                mv = moves[int(self.rng.integers(len(moves)))]
                entries.append({"time": t, "lane": lane_id, "movement": mv,
                                "v0": v0, "kind": KIND_REAL,
                                "v_low": cfg.uncooperative.v_low})
        entries.sort(key=lambda e: (e["time"], e["lane"]))
        for n, e in enumerate(entries, start=1):
            e["cav_id"] = "c%d" % n
        self._mark_uncooperative(entries)
        fakes = self._generate_fakes(entries)
        pending = [dict(e, fake=False) for e in entries] + fakes
        pending.sort(key=lambda e: (e["time"], e["cav_id"]))
        return pending

    def _mark_uncooperative(self, entries):
        spec = self.cfg.uncooperative
        if spec.ids:
            wanted = set(spec.ids)
            for e in entries:
                if e["cav_id"] in wanted:
                    e["kind"] = KIND_UNCOOPERATIVE
                    e["v_low"] = spec.v_low
            return
        if spec.count <= 0:
            return
        eligible = [e for e in entries if e["kind"] == KIND_REAL
                    and (not spec.lanes or e["lane"] in spec.lanes)]
        take = min(spec.count, len(eligible))
        picks = self.rng.choice(len(eligible), size=take, replace=False)
        for i in sorted(int(p) for p in picks):
            eligible[i]["kind"] = KIND_UNCOOPERATIVE
            eligible[i]["v_low"] = spec.v_low

    def _generate_fakes(self, entries):
        spec = self.cfg.attacker
        fakes = []
        for sp in spec.spawns:
            fakes.append({"time": sp.time, "entry": sp.entry,
                          "movement": sp.movement, "model": sp.model,
                          "lifetime": sp.lifetime, "fake": True})
        if spec.fake_fraction > 0 and entries:
            n = int(math.ceil(spec.fake_fraction * len(entries)))
            t_max = max(e["time"] for e in entries) or 1.0
            lanes = sorted(self.cfg.arrivals.lanes
                           or {e["lane"] for e in entries})
            for _ in range(n):
                lane = self.lane_by_id[lanes[int(self.rng.integers(len(lanes)))]]
                fakes.append({"time": float(self.rng.uniform(0.0, t_max)),
                              "entry": lane.entry, "movement": "straight",
                              "model": spec.model, "lifetime": None,
                              "fake": True})
        fakes.sort(key=lambda e: e["time"])
        for n, e in enumerate(fakes, start=1):
            e["cav_id"] = "f%d" % n
        return fakes

    # -- event log ----------------------------------------------------------

    def _event(self, kind, **data):
        rec = {"t": round(self.t, 9), "event": kind}
        rec.update(data)
        self.events.append(rec)

    # -- phase 1: population turnover ----------------------------------------

    def _departures(self):
        for rec in list(self.coord.active()):
            if rec.kind == KIND_FAKE:
                if rec.reporter.exited:
                    self.coord.release(rec, self.t)
                    self._event("fake_departed", cav_id=rec.cav_id)
                elif (rec.reporter.silent
                      and self.t - rec.last_report_time >= _REPORT_TIMEOUT):
                    self.coord.release(rec, self.t)
                    self._event("fake_timeout", cav_id=rec.cav_id)
                continue
            if rec.state.x >= rec.traj.total_length:
                self.coord.release(rec, self.t)
                self.exited.append(rec)
                self._event("departure", cav_id=rec.cav_id,
                            travel_time=rec.cost.travel_time)

    def _entry_blocked(self, traj, v0):
        brake = abs(self.cfg.limits.u_min)
        for r in self.coord.active():
            if r.traj.lane != traj.lane:
                continue
            if r.kind == KIND_FAKE:
                x, v_p = r.rep_x, r.rep_v
            else:
                x, v_p = r.state.x, r.state.v
            # while the closing speed exceeds phi*|u_min| the gap barrier
            # shrinks even under full braking; the entrant must absorb that
            # worst-case continuous-time dip AND leave the sampled rear row
            # feasible at its first step: v0 - v_p <= (phi+pad)|u_min|
            # + k*(b - standoff), otherwise the controller starts in
            # fallback
            dip = max(0.0, v0 - v_p - self.gains.phi * brake)
            deficit = max(0.0, (v0 - v_p
                                - (self.gains.phi + self.gains.sample_pad)
                                * brake)) / self.gains.k_rear
            clear = (self.gains.phi * v0 + self.gains.delta
                     + dip * dip / (2.0 * brake) + deficit
                     + self.gains.disc_margin)
            if x < clear:
                return True
        return False

    def _arrivals(self):
        cfg = self.cfg
        deferred = []
        while self.pending and self.pending[0]["time"] <= self.t + 1e-9:
            e = self.pending.pop(0)
            if e["fake"]:
                lane = next(l for l in self.geom.lanes
                            if l.entry == e["entry"])
                traj = self._traj_for(e["entry"], e["movement"])
                n_fakes = sum(1 for r in self.coord.active()
                              if r.kind == KIND_FAKE)
                if n_fakes >= cfg.attacker.max_fake_count:
                    e["time"] = self.t + cfg.run.ts
                    deferred.append(e)
                    continue
                reporter = FakeReporter(
                    e["model"], traj, cfg.run.ts, cfg.limits,
                    initial_speed=cfg.attacker.initial_speed,
                    crawl_speed=cfg.attacker.crawl_speed,
                    lifetime=e["lifetime"],
                    trigger_delay=cfg.attacker.trigger_delay)
                rec = CavRecord(cav_id=e["cav_id"], kind=KIND_FAKE,
                                traj=traj, arrival_time=self.t,
                                sensor=cfg.sensor, reporter=reporter,
                                last_report_time=self.t)
                self.coord.register(rec)
                self._event("fake_spawn", cav_id=rec.cav_id,
                            model=e["model"], lane=lane.id,
                            index=rec.index)
                continue
            lane = self.lane_by_id[e["lane"]]
            traj = self._traj_for(lane.entry, e["movement"])
            if self._entry_blocked(traj, e["v0"]):
                e["time"] = self.t + cfg.run.ts
                deferred.append(e)
                continue
            rec = CavRecord(cav_id=e["cav_id"], kind=e["kind"], traj=traj,
                            arrival_time=self.t,
                            state=dynamics.VehicleState(0.0, e["v0"], self.t),
                            sensor=cfg.sensor,
                            v_low=(e["v_low"]
                                   if e["kind"] == KIND_UNCOOPERATIVE
                                   else None))
            self.coord.register(rec)
            self._event("arrival", cav_id=rec.cav_id, lane=lane.id,
                        movement=e["movement"], vehicle_kind=e["kind"],
                        index=rec.index)
        if deferred:
            self.pending.extend(deferred)
            self.pending.sort(key=lambda e: (e["time"], e["cav_id"]))

    # -- phase 2: reports ----------------------------------------------------

    def _reports(self):
        for rec in self.coord.active():
            if rec.kind == KIND_FAKE:
                report = rec.reporter.current_report()
                if report is None:
                    continue
                if rec.arrival_time < self.t:
                    rec.prev_rep = (rec.rep_x, rec.rep_v)
                rec.rep_x, rec.rep_v, rec.rep_u = report
                rec.last_report_time = self.t
            else:
                if rec.arrival_time < self.t:
                    rec.prev_rep = (rec.rep_x, rec.rep_v)
                rec.rep_x = rec.state.x
                rec.rep_v = rec.state.v
                rec.rep_u = self.last_u.get(rec.cav_id, 0.0)
                rec.last_report_time = self.t

    # -- phase 3: perception ---------------------------------------------------

    def _perceive(self):
        active = self.coord.active()
        physical = [r for r in active if r.kind != KIND_FAKE]
        true_poses = {r.cav_id: perception.pose_of(r.traj, r.state.x)
                      for r in physical}
        reported_poses = {r.cav_id: perception.pose_of(r.traj, r.rep_x)
                          for r in active}
        sensors = {r.cav_id: r.sensor for r in active}
        visible = {}
        body_ids = sorted(true_poses)
        for r in physical:
            visible[r.cav_id] = perception.visible_set(
                r.cav_id, true_poses, body_ids, r.sensor)
        observers_of = {r.cav_id: set() for r in active}
        for r in sorted(physical, key=lambda r: r.cav_id):
            for j in sorted(visible[r.cav_id]):
                target = self.coord.records[j]
                perception.observe(r.cav_id, j, target.state.x,
                                   target.state.v, r.sensor, self.rng,
                                   t=self.t)
                observers_of[j].add(r.cav_id)
        return reported_poses, sensors, visible, observers_of

    # -- phase 4: trust ---------------------------------------------------------

    def _check_co_observation(self, rec, reported_poses, sensors,
                              observers_of):
        params = self.cfg.trust
        framing = self.cfg.framing
        if (rec.kind != KIND_FAKE and rec.cav_id in framing.targets
                and self.t >= framing.start):
            mag = framing.magnitude or params.p_magnitudes[0]
            return CheckResult(negative=mag)
        # only observers whose own reports have earned trust can testify;
        # an untrusted identity claiming a vantage point must not be able to
        # frame a real vehicle by failing to observe it
        threshold = 1.0 - params.delta
        trusted = {r.cav_id for r in self.coord.active()
                   if r.trust.tau >= threshold}
        confirmed = observers_of[rec.cav_id] & trusted
        if confirmed:
            # a trusted sensor actually sees a body at the reported slot;
            # that outranks any expected observer failing to look its way
            return CheckResult(positive=params.r_magnitudes[0],
                               involved=tuple(sorted(confirmed)))
        expected = perception.expected_observers(rec.cav_id, reported_poses,
                                                 sensors)
        # a would-be witness must also be physically confirmed (some sensor
        # actually sees a body at its claimed slot); an unseen identity has
        # no standing to contradict anyone
        expected &= trusted
        expected &= {i for i, obs in observers_of.items() if obs}
        if not expected:
            # vacuous pass: nobody trusted is in a position to contradict
            # the report, so the check finds no inconsistency
            return CheckResult(positive=params.r_magnitudes[0])
        involved = tuple(sorted(expected))
        if observers_of[rec.cav_id] & expected:
            return CheckResult(positive=params.r_magnitudes[0],
                               involved=involved)
        return CheckResult(negative=params.p_magnitudes[0],
                           involved=involved)

    def _check_initial(self, rec):
        params = self.cfg.trust
        if rec.init_checked or rec.prev_rep is not None:
            return CheckResult()
        rec.init_checked = True
        lim = self.cfg.limits
        ok = (abs(rec.rep_x) <= _CHECK_TOL
              and lim.v_min - _CHECK_TOL <= rec.rep_v
              <= lim.v_max + _CHECK_TOL)
        if ok:
            return CheckResult(positive=params.r_magnitudes[1])
        return CheckResult(negative=params.p_magnitudes[1])

    def _check_dynamics(self, rec):
        params = self.cfg.trust
        if rec.prev_rep is None:
            return CheckResult()
        lim = self.cfg.limits
        x0, v0 = rec.prev_rep
        try:
            pred = dynamics.step(dynamics.VehicleState(x0, v0, 0.0),
                                 rec.rep_u, self.cfg.run.ts, lim)
        except dynamics.ActuatorBoundError:
            return CheckResult(negative=params.p_magnitudes[2])
        ok = (abs(pred.x - rec.rep_x) <= _CHECK_TOL
              and abs(pred.v - rec.rep_v) <= _CHECK_TOL)
        if ok:
            return CheckResult(positive=params.r_magnitudes[2])
        return CheckResult(negative=params.p_magnitudes[2])

    def _check_rules(self, rec):
        """Rule conformance of the reports.

        Two judgements that hold for every compliant vehicle: the rear-end
        gap to the reported predecessor never goes negative (beyond the
        discretization slack), and no merging point is crossed while a
        lower-index vehicle is still bound for it.  The raw merging-gap
        surrogate is deliberately not judged: it is legitimately violated
        right after arrival, before the controller has restored it.
        """
        params = self.cfg.trust
        involved = []
        violated = False
        rear = self.coord.rear_chain(rec)
        if rear:
            pred = rear[0]
            involved.append(pred.cav_id)
            b = (pred.rep_x - rec.rep_x - self.gains.phi * rec.rep_v
                 - self.gains.delta)
            if b < -_RULE_TOL:
                violated = True
        if rec.prev_rep is not None:
            prev_x = rec.prev_rep[0]
            for mp_id, dist in rec.traj.mp_sequence:
                if not prev_x < dist <= rec.rep_x:
                    continue
                chain = self.coord.merge_chain(rec, mp_id)
                if chain:
                    involved.append(chain[0].cav_id)
                    violated = True
        if not involved:
            # vacuous pass: no conflicting vehicle to break a rule against
            return CheckResult(positive=params.r_magnitudes[3])
        involved = tuple(sorted(set(involved)))
        if violated:
            return CheckResult(negative=params.p_magnitudes[3],
                               involved=involved)
        return CheckResult(positive=params.r_magnitudes[3],
                           involved=involved)

    def _trust_updates(self, reported_poses, sensors, observers_of):
        params = self.cfg.trust
        active = self.coord.active()
        snapshot = {r.cav_id: r.trust.tau for r in active}
        newly_flagged = []
        for rec in sorted(active, key=lambda r: r.cav_id):
            if rec.kind == KIND_FAKE and rec.reporter.silent:
                continue
            ev = EvidenceVector(
                co_observation=self._check_co_observation(
                    rec, reported_poses, sensors, observers_of),
                initial_condition=self._check_initial(rec),
                dynamic_model=self._check_dynamics(rec),
                cz_rules=self._check_rules(rec))
            state = update_trust(rec.trust, ev, snapshot, params.gamma)
            verdict, state = detect_fake(state, params.delta,
                                         params.window_steps)
            rec.trust = state
            if rec.verdict != VERDICT_FAKE:
                rec.verdict = verdict
                if verdict == VERDICT_FAKE:
                    rec.flag_time = self.t
                    newly_flagged.append(rec)
                    self._event("flagged_fake", cav_id=rec.cav_id,
                                tau=rec.trust.tau,
                                physical=rec.kind != KIND_FAKE)
        return newly_flagged

    # -- phase 5: mitigation -----------------------------------------------------

    def _mitigation(self, newly_flagged, visible):
        if not self.mitigation:
            return
        if newly_flagged:
            result = self.coord.mitigation_reschedule()
            if result:
                self.coord.apply_assignment(result.assignment)
                self.reschedule_counts["mitigation"] += 1
                self._event("reschedule", scheme="mitigation",
                            assignment={str(k): v for k, v
                                        in sorted(result.assignment.items())},
                            exact=result.exact)
        # overtake progress
        for rec in self.coord.active():
            if rec.kind == KIND_FAKE or rec.overtaking is None:
                continue
            target = self.coord.records.get(rec.overtaking)
            if target is None or target.exited:
                rec.overtaking = None
                continue
            if self.coord.overtake_complete(rec, target, self.gains):
                if target.index < rec.index:
                    self.coord.swap_indices(rec, target)
                rec.overtaking = None
                self._event("overtake_complete", cav_id=rec.cav_id,
                            target=target.cav_id)

    # -- phase 6: scheme rescheduling ---------------------------------------------

    def _reschedule(self):
        if self.scheme == "fifo":
            return
        cfg = self.cfg.reschedule
        if self.t - self.last_reschedule < cfg.cooldown:
            return
        if self.scheme in ("trust", "both"):
            result = self.coord.trust_reschedule(cfg.trust_fraction)
            if result:
                self.coord.apply_assignment(result.assignment)
                self.last_reschedule = self.t
                self.reschedule_counts["trust"] += 1
                self._event("reschedule", scheme="trust",
                            assignment={str(k): v for k, v
                                        in sorted(result.assignment.items())},
                            exact=result.exact)
                return
        if self.scheme in ("lane", "both"):
            result = self.coord.lane_reschedule(cfg.v_low, cfg.lane_fraction,
                                                cfg.lane_smoothing)
            if result:
                self.coord.apply_assignment(result.assignment)
                self.last_reschedule = self.t
                self.reschedule_counts["lane"] += 1
                self._event("reschedule", scheme="lane",
                            assignment={str(k): v for k, v
                                        in sorted(result.assignment.items())},
                            exact=result.exact)

    # -- phases 7 + 8: control ------------------------------------------------------

    def _target_mode(self, rec, target, visible):
        """How a constraint against one predecessor is handled.

        "normal": keep the row as built.  For flagged fakes under active
        mitigation: "drop" when the reported slot is within sensing range but
        nothing is physically there, "rho" (stiffened gain) while it is still
        out of range, and "normal" when a body is actually visible (the flag
        was a false positive).
        """
        if not (self.mitigation and target.flagged_fake):
            return "normal"
        pa = perception.pose_of(rec.traj, rec.state.x)
        pb = perception.pose_of(target.traj, target.rep_x)
        dist = math.hypot(pb[0] - pa[0], pb[1] - pa[1])
        if dist > rec.sensor.radius:
            return "rho"
        if target.cav_id in visible.get(rec.cav_id, ()):
            return "normal"
        return "drop"

    def _select_targets(self, rec, chain, visible):
        """Walk a predecessor chain applying search + mitigation rules.

        Yields (target, mode) pairs with mode != "drop"; stops after the
        first kept target that is trusted (or after the first kept target at
        all when the trust-based search is off).
        """
        threshold = 1.0 - self.cfg.trust.delta
        for target in chain:
            mode = self._target_mode(rec, target, visible)
            yield target, mode
            if mode == "drop":
                continue
            if not self.trust_search or target.trust.tau >= threshold:
                break

    def _control_rows(self, rec, visible):
        cfg = self.cfg
        eps = cfg.sensor.epsilon
        rows = []
        rec.enforced_merges = set()
        overtake_candidate = None
        for target, mode in self._select_targets(
                rec, self.coord.rear_chain(rec), visible):
            if mode == "drop":
                if overtake_candidate is None:
                    overtake_candidate = target
                continue
            rho = cfg.control.rho if mode == "rho" else 0.0
            noisy = ("x_ip", "v_ip") if eps > 0 else ()
            rows.append(rear_end_constraint(
                rec.state.x, rec.state.v, target.rep_x, target.rep_v,
                self.gains, "rear:%s" % target.cav_id,
                eps=eps, noisy=noisy, rho=rho))
        for mp_id in sorted(rec.traj.merge_point_ids()):
            d_i = rec.mp_distance(mp_id) - rec.state.x
            if d_i <= 0:
                continue
            for target, mode in self._select_targets(
                    rec, self.coord.merge_chain(rec, mp_id), visible):
                if mode == "drop":
                    continue
                d_p = target.mp_distance(mp_id) - target.rep_x
                if d_p <= 0:
                    continue
                tag = "merge:%s:%s" % (mp_id, target.cav_id)
                gap = (d_i - d_p - self.gains.phi * rec.state.v
                       - self.gains.delta)
                standoff = self.gains.disc_margin / self.gains.k_merge
                if d_p > d_i or gap < standoff:
                    # predecessor behind in remaining distance, or the gap
                    # not yet established: wait before the point instead of
                    # enforcing a row that starts out violated
                    rows.append(hold_constraint(
                        d_i, rec.state.v, self.gains, cfg.limits.u_min, tag,
                        ts=cfg.run.ts))
                    continue
                rho = cfg.control.rho if mode == "rho" else 0.0
                noisy = ("d_im", "v_im") if eps > 0 else ()
                rec.enforced_merges.add((mp_id, target.cav_id))
                rows.append(merging_constraint(
                    d_i, rec.state.v, d_p, target.rep_v, self.gains, tag,
                    eps=eps, noisy=noisy, rho=rho))
        return rows, overtake_candidate

    def _controls(self, visible):
        cfg = self.cfg
        controls = {}
        for rec in self.coord.active():
            if rec.kind == KIND_FAKE:
                continue
            rows, overtake_candidate = self._control_rows(rec, visible)
            if (overtake_candidate is not None and cfg.mitigation.overtake
                    and rec.overtaking is None
                    and overtake_candidate.traj.lane == rec.traj.lane):
                rec.overtaking = overtake_candidate.cav_id
                self._event("overtake_start", cav_id=rec.cav_id,
                            target=overtake_candidate.cav_id)
            if rec.kind == KIND_UNCOOPERATIVE:
                u_ref, v_ref = uncooperative_override(rec.v_low)
            elif rec.overtaking is not None:
                u_ref, v_ref = cfg.limits.u_max, cfg.limits.v_max
            else:
                u_ref, v_ref = reference_control(
                    rec.state.v, cfg.control.ref_policy,
                    v_free=cfg.control.v_ref)
            program = build_program(u_ref, v_ref, rec.state.v, cfg.limits,
                                    self.gains, rows)
            sol = solve_step(program)
            if not sol.feasible:
                self.fallback_steps += 1
                self._event("fallback", cav_id=rec.cav_id)
            u = min(max(sol.u, cfg.limits.u_min), cfg.limits.u_max)
            controls[rec.cav_id] = u
            self.last_u[rec.cav_id] = u
        return controls

    # -- phase 9: integration and true-state safety metrics -------------------------

    def _true_rear_margin(self, rec, physical):
        best = INF
        for other in physical:
            if other is rec or other.traj.lane != rec.traj.lane:
                continue
            if other.state.x <= rec.state.x:
                continue
            if other.state.x >= self.geom.shared_path_length(rec.traj,
                                                             other.traj):
                continue
            b = (other.state.x - rec.state.x
                 - self.gains.phi * rec.state.v - self.gains.delta)
            best = min(best, b)
        return best

    def _merge_surrogates(self, physical):
        """Sampled true-state margins of the enforced merging rows.

        A pair is measured while the controller holds an active merging gap
        row for it.  Pairs the controller instead parks behind a
        stop-before-point row carry no gap guarantee; actual conflicts for
        those are caught by the crossing-instant check in _integrate.
        """
        by_id = {r.cav_id: r for r in physical}
        for rec in physical:
            for mp_id, other_id in rec.enforced_merges:
                other = by_id.get(other_id)
                if other is None:
                    continue
                d_i = rec.mp_distance(mp_id) - rec.state.x
                d_j = other.mp_distance(mp_id) - other.state.x
                if d_i <= 0 or d_j <= 0:
                    continue
                b = (d_i - d_j - self.gains.phi * rec.state.v
                     - self.gains.delta)
                if b < rec.min_merge_b:
                    rec.min_merge_b = b
                self.min_merge_b = min(self.min_merge_b, b)

    def _integrate(self, controls):
        cfg = self.cfg
        physical = [r for r in self.coord.active() if r.kind != KIND_FAKE]
        for rec in physical:
            b = self._true_rear_margin(rec, physical)
            if b < rec.min_rear_b:
                rec.min_rear_b = b
            self.min_rear_b = min(self.min_rear_b, b)
        self._merge_surrogates(physical)
        crossings = []
        old_states = {}
        for rec in physical:
            u = controls[rec.cav_id]
            rec.cost = dynamics.accumulate(rec.cost, rec.state, u,
                                           cfg.run.ts, cfg.fuel)
            old_states[rec.cav_id] = rec.state
            rec.state = dynamics.step(rec.state, u, cfg.run.ts, cfg.limits)
            old_x = old_states[rec.cav_id].x
            for mp_id, dist in rec.traj.mp_sequence:
                if old_x < dist <= rec.state.x:
                    frac = ((dist - old_x) / (rec.state.x - old_x)
                            if rec.state.x > old_x else 1.0)
                    crossings.append((rec, mp_id, frac))
        # headroom of every vehicle still bound for a point somebody crossed,
        # with states interpolated to the crossing instant (collision check)
        for leader, mp_id, frac in crossings:
            for rec in physical:
                if rec is leader or rec.traj.lane == leader.traj.lane:
                    continue
                if mp_id not in rec.traj.merge_point_ids():
                    continue
                old = old_states[rec.cav_id]
                x = old.x + frac * (rec.state.x - old.x)
                v = old.v + frac * (rec.state.v - old.v)
                d_i = rec.mp_distance(mp_id) - x
                if d_i <= 0:
                    continue
                b = d_i - self.gains.phi * v - self.gains.delta
                self.min_crossing_margin = min(self.min_crossing_margin, b)
                if b < 0:
                    self._event("merge_conflict", cav_id=rec.cav_id,
                                leader=leader.cav_id, mp=mp_id,
                                margin=b)
        for rec in self.coord.active():
            if rec.kind == KIND_FAKE:
                rec.reporter.advance()

    # -- trace --------------------------------------------------------------

    def _record_trace(self, controls):
        for rec in self.coord.active():
            fake = rec.kind == KIND_FAKE
            x = rec.rep_x if fake else rec.state.x
            v = rec.rep_v if fake else rec.state.v
            u = rec.rep_u if fake else controls.get(rec.cav_id, 0.0)
            zone = self.geom.zone_of(x, rec.traj).value
            self.trace.append((
                _fmt(self.t), rec.cav_id, str(rec.index), zone,
                _fmt(x), _fmt(v), _fmt(u), _fmt(rec.rep_x), _fmt(rec.rep_v),
                _fmt(rec.trust.tau), _fmt(rec.trust.R), _fmt(rec.trust.P),
                rec.verdict,
                _fmt(rec.min_rear_b if not fake else None),
                _fmt(rec.min_merge_b if not fake else None)))

    # -- main loop ------------------------------------------------------------

    def run(self):
        cfg = self.cfg
        n_steps = int(round(cfg.run.horizon / cfg.run.ts))
        for _ in range(n_steps):
            self._departures()
            self._arrivals()
            if not self.pending and not self.coord.active():
                break
            self._reports()
            reported_poses, sensors, visible, observers_of = self._perceive()
            newly_flagged = self._trust_updates(reported_poses, sensors,
                                                observers_of)
            self._mitigation(newly_flagged, visible)
            self._reschedule()
            controls = self._controls(visible)
            self._record_trace(controls)
            self._integrate(controls)
            self.t += cfg.run.ts
            self.steps_run += 1
        self._departures()
        return self.summary()

    # -- outputs -----------------------------------------------------------------

    def summary(self):
        recs = list(self.coord.records.values())
        physical = [r for r in recs if r.kind != KIND_FAKE]
        fakes = [r for r in recs if r.kind == KIND_FAKE]
        exited = [r for r in physical if r.exited]
        coop = [r for r in exited if r.kind == KIND_REAL]

        def avg(rs, fn):
            return sum(fn(r) for r in rs) / len(rs) if rs else None

        detection = {r.cav_id: round(r.flag_time - r.arrival_time, 9)
                     for r in fakes if r.flag_time is not None}
        false_pos = sorted(r.cav_id for r in physical
                           if r.verdict == VERDICT_FAKE)
        return {
            "scheme": self.scheme,
            "mitigation": self.mitigation,
            "seed": self.seed,
            "ts": self.cfg.run.ts,
            "steps_run": self.steps_run,
            "counts": {
                "real_total": len(physical),
                "real_exited": len(exited),
                "uncooperative_total": len([r for r in physical
                                            if r.kind == KIND_UNCOOPERATIVE]),
                "fake_total": len(fakes),
                "fake_flagged": len(detection),
                "false_positives": len(false_pos),
            },
            "averages": {
                "travel_time": avg(exited, lambda r: r.cost.travel_time),
                "energy": avg(exited, lambda r: r.cost.energy),
                "fuel": avg(exited, lambda r: r.cost.fuel),
            },
            "averages_cooperative": {
                "travel_time": avg(coop, lambda r: r.cost.travel_time),
                "energy": avg(coop, lambda r: r.cost.energy),
                "fuel": avg(coop, lambda r: r.cost.fuel),
            },
            "safety": {
                "min_rear_b": None if self.min_rear_b == INF
                else self.min_rear_b,
                "min_merge_b": None if self.min_merge_b == INF
                else self.min_merge_b,
                "min_crossing_margin": None
                if self.min_crossing_margin == INF
                else self.min_crossing_margin,
                "safe": self.min_rear_b >= -1e-6
                and self.min_merge_b >= -1e-6,
            },
            "detection_times": detection,
            "false_positive_ids": false_pos,
            "reschedules": dict(self.reschedule_counts),
            "fallback_steps": self.fallback_steps,
        }

    def write_outputs(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "trace.csv"), "w") as fh:
            fh.write(",".join(TRACE_COLUMNS) + "\n")
            for row in self.trace:
                fh.write(",".join(row) + "\n")
        with open(os.path.join(out_dir, "events.jsonl"), "w") as fh:
            for ev in self.events:
                fh.write(json.dumps(ev, sort_keys=True) + "\n")
        summary = self.summary()
        with open(os.path.join(out_dir, "summary.json"), "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return summary


def run_scenario(cfg, scheme="fifo", mitigation=None, seed=None,
                 out_dir=None):
    sim = Simulation(cfg, scheme=scheme, mitigation=mitigation, seed=seed)
    summary = sim.run()
    if out_dir is not None:
        summary = sim.write_outputs(out_dir)
    return summary


def set_config_value(raw, axis, value):
    """Set a dotted path like 'attacker.fake_fraction' in a raw config dict."""
    parts = axis.split(".")
    node = raw
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ValueError("axis %r does not address a section" % axis)
    node[parts[-1]] = value
    return raw


def run_sweep(raw_config, axis, values, seeds, out_dir, scheme="fifo",
              mitigation=None, parse=None):
    """One run per (axis value, seed); returns the aggregate table."""
    import copy

    from .config import parse_config
    parse = parse or parse_config
    table = []
    for value in values:
        raw = copy.deepcopy(raw_config)
        set_config_value(raw, axis, value)
        cfg = parse(raw)
        for seed in seeds:
            sub = os.path.join(out_dir, "%s=%s" % (axis, value),
                               "seed%d" % seed)
            summary = run_scenario(cfg, scheme=scheme, mitigation=mitigation,
                                   seed=seed, out_dir=sub)
            table.append({"axis": axis, "value": value, "seed": seed,
                          "summary": summary})
    agg_path = os.path.join(out_dir, "sweep.json")
    with open(agg_path, "w") as fh:
        json.dump(table, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return table
