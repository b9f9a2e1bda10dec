"""Adversarial and uncooperative behavior generators.

Three Sybil attacker models produce the fabricated state reports of fake
vehicles registered in the coordinator queue:

* ``naive`` - reports whose position/velocity propagation is inconsistent
  with the vehicle model (caught by the dynamic-model check), with an
  offset initial position (caught by the initial-condition check).
* ``dynamics_aware`` - reports that propagate exactly under the vehicle
  model but ignore the control-zone rules: the fake accelerates through its
  own rear-end / merging constraints to drag followers into the vehicle
  ahead (caught by the rule check and by co-observation).
* ``strategic`` - reports that are fully consistent and rule-abiding, but
  crawl at a low speed to occupy a queue slot and stall traffic (caught only
  by co-observation).

Uncooperative vehicles are real and non-malicious: their reference speed is
abnormally low, everything else uses the standard safety-filtered controller.
"""

from __future__ import annotations

from dataclasses import dataclass, field

ATTACK_MODELS = ("naive", "dynamics_aware", "strategic")


@dataclass(frozen=True)
class FakeSpawn:
    time: float
    entry: str
    movement: str        # geometry.Movement value
    model: str
    lifetime: float = None   # seconds until the reports stop; None = traverse


@dataclass(frozen=True)
class AttackerSpec:
    spawns: tuple = ()
    max_fake_count: int = 4
    fake_fraction: float = 0.0   # alternative to explicit spawns (sweeps)
    model: str = "strategic"     # model used for fraction-sampled fakes
    crawl_speed: float = 2.0     # reported speed of strategic fakes
    initial_speed: float = 10.0
    trigger_delay: float = 0.0   # dynamics_aware: seconds before full throttle

    def __post_init__(self):
        for sp in self.spawns:
            if sp.model not in ATTACK_MODELS:
                raise ValueError("unknown attacker model %r" % sp.model)
        if self.model not in ATTACK_MODELS:
            raise ValueError("unknown attacker model %r" % self.model)
        if not 0.0 <= self.fake_fraction < 1.0:
            raise ValueError("fake fraction must lie in [0, 1)")


@dataclass(frozen=True)
class UncooperativeSpec:
    count: int = 0
    v_low: float = 2.0
    lanes: tuple = ()     # lanes eligible to host uncooperative vehicles
    ids: tuple = ()       # explicit ids (scenario-crafted), optional


class FakeReporter:
    """Generates the per-step fabricated report stream of one fake vehicle."""

    def __init__(self, model, traj, ts, limits, initial_speed=10.0,
                 crawl_speed=2.0, lifetime=None, trigger_delay=0.0,
                 seed_jitter=0.0):
        if model not in ATTACK_MODELS:
            raise ValueError("unknown attacker model %r" % model)
        self.model = model
        self.traj = traj
        self.ts = ts
        self.limits = limits
        self.crawl_speed = crawl_speed
        self.lifetime = lifetime
        self.trigger_delay = trigger_delay
        self.age = 0.0
        self.silent = False
        if model == "naive":
            # offset entry position: fails the initial-condition check
            self.x = 5.0 + seed_jitter
        else:
            self.x = 0.0
        self.v = min(initial_speed, limits.v_max)
        self.u = 0.0

    def current_report(self):
        if self.silent:
            return None
        return (self.x, self.v, self.u)

    def advance(self, pred_report=None, gains=None):
        """Advance the fabricated state by one step.

        pred_report is the reported (x, v) of the queue predecessor the fake
        pretends to interact with (dynamics-aware model only).
        """
        self.age += self.ts
        if self.lifetime is not None and self.age >= self.lifetime:
            self.silent = True
            return
        ts = self.ts
        if self.model == "naive":
            # propagation inconsistent with x' = v: fixed position jumps
            self.u = 0.0
            self.x += self.v * ts + 0.5   # 0.5 m excess per step
        elif self.model == "strategic":
            # legal crawl: exact propagation at the crawl speed
            if self.v > self.crawl_speed:
                self.u = max(self.limits.u_min,
                             (self.crawl_speed - self.v) / ts)
            else:
                self.u = 0.0
            self._propagate()
        else:  # dynamics_aware
            # hold speed through the trigger delay, then full throttle
            # regardless of the safety rules
            if self.age <= self.trigger_delay:
                self.u = 0.0
            else:
                self.u = self.limits.u_max
            self._propagate()

    def _propagate(self):
        ts = self.ts
        v1 = min(max(self.v + self.u * ts, self.limits.v_min),
                 self.limits.v_max)
        if self.u != 0.0 and abs(v1 - (self.v + self.u * ts)) > 1e-12:
            t1 = (v1 - self.v) / self.u
            self.x += self.v * t1 + 0.5 * self.u * t1 * t1 + v1 * (ts - t1)
        else:
            self.x += self.v * ts + 0.5 * self.u * ts * ts
        self.v = v1

    @property
    def exited(self):
        return self.x >= self.traj.total_length


def uncooperative_override(v_low):
    """Reference override for an uncooperative vehicle: crawl at v_low."""
    return 0.0, v_low
