"""Double-integrator vehicle propagation and trip-cost accumulation.

The state update is the exact closed-form solution of x' = v, v' = u over a
fixed step, with piecewise integration when the velocity saturates at
v_min / v_max inside the step so that position stays exact.
"""

from __future__ import annotations

from dataclasses import dataclass

_U_TOL = 1e-9


class ActuatorBoundError(ValueError):
    """Control input outside the actuator box; the controller must pre-clip."""


@dataclass(frozen=True)
class VehicleState:
    x: float   # arc length along own trajectory [m]
    v: float   # [m/s]
    t: float   # [s]


@dataclass(frozen=True)
class VehicleLimits:
    v_min: float = 0.0
    v_max: float = 30.0
    u_min: float = -5.886
    u_max: float = 4.905


@dataclass(frozen=True)
class CostAccumulator:
    travel_time: float = 0.0
    energy: float = 0.0   # integral of u^2 / 2
    fuel: float = 0.0     # milliliters


@dataclass(frozen=True)
class FuelModel:
    """Polynomial fuel-rate model f(v, u), in ml/s.

    f = max(0, b0 + b1 v + b2 v^2 + b3 v^3 + u_+ (c0 + c1 v + c2 v^2)),
    with u_+ = max(u, 0).  Default coefficients follow the cruising +
    acceleration polynomial commonly used for mid-size gasoline vehicles.
    """
    b0: float = 0.1569
    b1: float = 0.02450
    b2: float = -0.0007415
    b3: float = 0.00005975
    c0: float = 0.07224
    c1: float = 0.09681
    c2: float = 0.001075

    def rate(self, v, u):
        base = self.b0 + self.b1 * v + self.b2 * v * v + self.b3 * v ** 3
        if u > 0.0:
            base += u * (self.c0 + self.c1 * v + self.c2 * v * v)
        return max(0.0, base)


def step(state, u, ts, limits):
    """Advance one step of length ts under constant input u.

    Velocity saturates at the limits; position integrates the clipped
    velocity profile exactly.
    """
    if ts <= 0:
        raise ValueError("ts must be > 0")
    if u < limits.u_min - _U_TOL or u > limits.u_max + _U_TOL:
        raise ActuatorBoundError(
            "u=%r outside [%r, %r]" % (u, limits.u_min, limits.u_max))
    v0 = state.v
    if u == 0.0 or (v0 >= limits.v_max and u > 0) or (v0 <= limits.v_min and u < 0):
        v_hold = min(max(v0, limits.v_min), limits.v_max)
        return VehicleState(state.x + v_hold * ts, v_hold, state.t + ts)
    v_end = v0 + u * ts
    bound = limits.v_max if u > 0 else limits.v_min
    if (u > 0 and v_end <= bound) or (u < 0 and v_end >= bound):
        dx = v0 * ts + 0.5 * u * ts * ts
        return VehicleState(state.x + dx, v_end, state.t + ts)
    # saturation crossed mid-step: integrate the two pieces
    t1 = (bound - v0) / u
    dx = v0 * t1 + 0.5 * u * t1 * t1 + bound * (ts - t1)
    return VehicleState(state.x + dx, bound, state.t + ts)


def accumulate(cost, state, u, ts, fuel_model):
    """Left-endpoint accumulation of travel time, energy and fuel."""
    if ts <= 0:
        raise ValueError("ts must be > 0")
    return CostAccumulator(
        travel_time=cost.travel_time + ts,
        energy=cost.energy + 0.5 * u * u * ts,
        fuel=cost.fuel + fuel_model.rate(state.v, u) * ts)
