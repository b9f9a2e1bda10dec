"""Scenario configuration: JSON schema, defaults and validation.

A scenario file is a JSON object with optional sections ``geometry``,
``run``, ``limits``, ``control``, ``sensor``, ``trust``, ``arrivals``,
``attacker``, ``uncooperative``, ``reschedule``, ``mitigation`` and
``framing``.  Unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields

from .dynamics import FuelModel, VehicleLimits
from .geometry import Movement, build_intersection
from .perception import SensorSpec
from .threats import AttackerSpec, FakeSpawn, UncooperativeSpec
from .trust import TrustParams


class ConfigError(ValueError):
    pass


def _from_dict(cls, raw, section):
    if raw is None:
        return cls()
    allowed = {f.name for f in fields(cls)}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError("unknown key(s) %s in section %r"
                          % (sorted(unknown), section))
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError("invalid section %r: %s" % (section, exc))


@dataclass(frozen=True)
class GeometryConfig:
    approach_length: float = 300.0
    rescheduling_zone_length: float = 219.0
    area: float = 30.0
    half_width: float = None

    def build(self):
        try:
            return build_intersection(
                approach_length=self.approach_length,
                rescheduling_zone_length=self.rescheduling_zone_length,
                half_width=self.half_width, area=self.area)
        except ValueError as exc:
            raise ConfigError(str(exc))


@dataclass(frozen=True)
class RunConfig:
    ts: float = 0.1
    horizon: float = 60.0
    seed: int = 1

    def __post_init__(self):
        if self.ts <= 0:
            raise ValueError("step size must be > 0")
        if self.horizon <= 0:
            raise ValueError("horizon must be > 0")


@dataclass(frozen=True)
class ControlConfig:
    phi: float = 1.8
    delta: float = 3.78
    k_rear: float = 1.0
    k_merge: float = 1.0
    k_limit: float = 1.0
    c3: float = 1.0
    lam: float = 10.0
    ref_policy: str = "constant"   # "constant" | "time_energy"
    v_ref: float = 15.0
    rho: float = 2.0               # class-K stiffening for unseen fakes

    def __post_init__(self):
        if self.ref_policy not in ("constant", "time_energy"):
            raise ValueError("unknown reference policy %r" % self.ref_policy)
        if self.phi <= 0 or self.delta <= 0:
            raise ValueError("headway parameters must be > 0")
        if self.rho < 0:
            raise ValueError("rho must be >= 0")


@dataclass(frozen=True)
class ArrivalSpec:
    time: float
    lane: str
    movement: str
    v0: float
    kind: str = "real"        # "real" | "uncooperative"
    v_low: float = None       # crawl speed when uncooperative


@dataclass(frozen=True)
class ArrivalsConfig:
    schedule: tuple = ()
    rate_per_lane: float = 0.0      # Poisson arrivals per second per lane
    lanes: tuple = ()               # lanes receiving random arrivals
    count: int = 0                  # random arrivals per listed lane
    v0_range: tuple = (10.0, 10.0)
    min_headway: float = 2.0        # seconds between same-lane arrivals

    def __post_init__(self):
        object.__setattr__(self, "schedule", tuple(
            sp if isinstance(sp, ArrivalSpec) else ArrivalSpec(**sp)
            for sp in self.schedule))
        if self.rate_per_lane < 0:
            raise ValueError("arrival rate must be >= 0")
        if self.rate_per_lane > 0 and not self.lanes:
            raise ValueError("random arrivals need a lane list")
        lo, hi = self.v0_range
        if lo > hi or lo < 0:
            raise ValueError("bad v0 range")


@dataclass(frozen=True)
class RescheduleConfig:
    enabled: bool = False
    trust_fraction: float = 0.2    # share of distrusted queue that triggers
    lane_fraction: float = 0.5     # slow share of the queue that triggers
    v_low: float = 2.0
    nu: int = 1
    cooldown: float = 1.0          # seconds between reorderings
    lane_smoothing: float = 1.0    # constant c in the lane priority ratio

    def __post_init__(self):
        if not 0.0 < self.trust_fraction <= 1.0:
            raise ValueError("trust trigger fraction must lie in (0, 1]")
        if not 0.0 < self.lane_fraction <= 1.0:
            raise ValueError("lane trigger fraction must lie in (0, 1]")
        if self.v_low <= 0:
            raise ValueError("v_low must be > 0")
        if self.nu < 1:
            raise ValueError("nu must be >= 1")


@dataclass(frozen=True)
class MitigationConfig:
    enabled: bool = False
    overtake: bool = True


@dataclass(frozen=True)
class FramingConfig:
    """Adversarial negative evidence injected against real vehicles."""
    targets: tuple = ()
    start: float = 0.0
    magnitude: float = None   # defaults to the co-observation penalty


def _build_attacker(raw):
    if raw is None:
        return AttackerSpec()
    raw = dict(raw)
    spawns = tuple(FakeSpawn(**sp) for sp in raw.pop("spawns", ()))
    allowed = {f.name for f in fields(AttackerSpec)}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError("unknown key(s) %s in section 'attacker'"
                          % sorted(unknown))
    try:
        return AttackerSpec(spawns=spawns, **raw)
    except ValueError as exc:
        raise ConfigError("invalid section 'attacker': %s" % exc)


@dataclass(frozen=True)
class ScenarioConfig:
    geometry: GeometryConfig
    run: RunConfig
    limits: VehicleLimits
    control: ControlConfig
    sensor: SensorSpec
    trust: TrustParams
    arrivals: ArrivalsConfig
    attacker: AttackerSpec
    uncooperative: UncooperativeSpec
    reschedule: RescheduleConfig
    mitigation: MitigationConfig
    framing: FramingConfig
    fuel: FuelModel


_SECTIONS = ("geometry", "run", "limits", "control", "sensor", "trust",
             "arrivals", "attacker", "uncooperative", "reschedule",
             "mitigation", "framing", "fuel")


def parse_config(raw):
    unknown = set(raw) - set(_SECTIONS)
    if unknown:
        raise ConfigError("unknown top-level key(s) %s" % sorted(unknown))
    trust_raw = dict(raw.get("trust") or {})
    for key in ("r_magnitudes", "p_magnitudes"):
        if key in trust_raw:
            trust_raw[key] = tuple(trust_raw[key])
    cfg = ScenarioConfig(
        geometry=_from_dict(GeometryConfig, raw.get("geometry"), "geometry"),
        run=_from_dict(RunConfig, raw.get("run"), "run"),
        limits=_from_dict(VehicleLimits, raw.get("limits"), "limits"),
        control=_from_dict(ControlConfig, raw.get("control"), "control"),
        sensor=_from_dict(SensorSpec, raw.get("sensor"), "sensor"),
        trust=_from_dict(TrustParams, trust_raw, "trust"),
        arrivals=_from_dict(ArrivalsConfig, _tupled(raw.get("arrivals")),
                            "arrivals"),
        attacker=_build_attacker(raw.get("attacker")),
        uncooperative=_from_dict(UncooperativeSpec,
                                 _tupled(raw.get("uncooperative")),
                                 "uncooperative"),
        reschedule=_from_dict(RescheduleConfig, raw.get("reschedule"),
                              "reschedule"),
        mitigation=_from_dict(MitigationConfig, raw.get("mitigation"),
                              "mitigation"),
        framing=_from_dict(FramingConfig, _tupled(raw.get("framing")),
                           "framing"),
        fuel=_from_dict(FuelModel, raw.get("fuel"), "fuel"),
    )
    _validate(cfg)
    return cfg


def _tupled(raw):
    if raw is None:
        return None
    out = dict(raw)
    for key, val in out.items():
        if isinstance(val, list):
            out[key] = tuple(val)
    return out


def load_config(path):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError("cannot read config: %s" % exc)
    except json.JSONDecodeError as exc:
        raise ConfigError("config is not valid JSON: %s" % exc)
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    return parse_config(raw)


def braking_clearance(cfg):
    """Distance needed past the rescheduling zone for a newly demoted
    vehicle to brake from full speed and restore its headway."""
    return (cfg.limits.v_max ** 2 / (2.0 * abs(cfg.limits.u_min))
            + cfg.control.delta)


def check_reschedule_bound(cfg):
    """Reject geometries where a reordering could be physically unservable."""
    avail = (cfg.geometry.approach_length
             - cfg.geometry.rescheduling_zone_length)
    need = braking_clearance(cfg)
    if avail < need - 1e-9:
        raise ConfigError(
            "rescheduling needs L - L1 >= v_max^2 / (2*|u_min|) + Delta "
            "= %.3f m, got %.3f m" % (need, avail))


def _validate(cfg):
    if cfg.run.seed < 0:
        raise ConfigError("seed must be >= 0")
    if cfg.geometry.rescheduling_zone_length >= cfg.geometry.approach_length:
        raise ConfigError("rescheduling zone must end before the "
                          "intersection entry")
    if cfg.geometry.rescheduling_zone_length < 0:
        raise ConfigError("rescheduling zone length must be >= 0")
    geom = cfg.geometry.build()
    lanes = {lane.id: lane for lane in geom.lanes}
    movements = {m.value for m in Movement}
    for sp in cfg.arrivals.schedule:
        if sp.lane not in lanes:
            raise ConfigError("unknown lane %r in arrival schedule" % sp.lane)
        if sp.movement not in movements:
            raise ConfigError("unknown movement %r" % sp.movement)
        if (lanes[sp.lane].entry, Movement(sp.movement)) \
                not in geom.trajectories:
            raise ConfigError("movement %r not allowed from lane %r"
                              % (sp.movement, sp.lane))
        if not cfg.limits.v_min <= sp.v0 <= cfg.limits.v_max:
            raise ConfigError("arrival speed %g outside the velocity limits"
                              % sp.v0)
        if sp.kind not in ("real", "uncooperative"):
            raise ConfigError("unknown arrival kind %r" % sp.kind)
    for lane_id in cfg.arrivals.lanes:
        if lane_id not in lanes:
            raise ConfigError("unknown lane %r in arrival lanes" % lane_id)
    for sp in cfg.attacker.spawns:
        if sp.entry not in {lane.entry for lane in geom.lanes}:
            raise ConfigError("unknown entry %r in attacker spawn" % sp.entry)
        if sp.movement not in movements:
            raise ConfigError("unknown movement %r" % sp.movement)
        if (sp.entry, Movement(sp.movement)) not in geom.trajectories:
            raise ConfigError("movement %r not reachable from entry %r"
                              % (sp.movement, sp.entry))
    if cfg.reschedule.enabled:
        check_reschedule_bound(cfg)
    if not math.isfinite(cfg.run.horizon):
        raise ConfigError("horizon must be finite")
    return cfg
