"""Vehicle propagation against a fine-grained numeric integrator."""

import math

import pytest
from hypothesis import given, settings, strategies as st

from intersim.dynamics import (ActuatorBoundError, CostAccumulator,
                               FuelModel, VehicleLimits, VehicleState,
                               accumulate, step)

LIMITS = VehicleLimits()


def numeric_step(x, v, u, ts, limits, n=20000):
    """Euler integration of the velocity-clipped double integrator."""
    h = ts / n
    for _ in range(n):
        x += v * h
        v = min(max(v + u * h, limits.v_min), limits.v_max)
    return x, v


@settings(max_examples=200, deadline=None)
@given(v0=st.floats(0.0, 30.0), u=st.floats(-5.886, 4.905),
       ts=st.floats(0.01, 0.5))
def test_step_matches_numeric_integration(v0, u, ts):
    s0 = VehicleState(x=10.0, v=v0, t=0.0)
    s1 = step(s0, u, ts, LIMITS)
    xn, vn = numeric_step(s0.x, s0.v, u, ts, LIMITS)
    assert s1.v == pytest.approx(vn, abs=1e-3)
    assert s1.x == pytest.approx(xn, abs=1e-3)
    assert s1.t == pytest.approx(ts)
    assert LIMITS.v_min - 1e-12 <= s1.v <= LIMITS.v_max + 1e-12


def test_step_exact_no_saturation():
    s = step(VehicleState(0.0, 10.0, 0.0), 2.0, 0.1, LIMITS)
    assert s.x == pytest.approx(10.0 * 0.1 + 0.5 * 2.0 * 0.01)
    assert s.v == pytest.approx(10.2)


def test_step_exact_saturation_at_vmax():
    # reaches v_max = 30 after 0.05 s, then coasts
    s = step(VehicleState(0.0, 29.9, 0.0), 2.0, 0.1, LIMITS)
    t1 = 0.1 / 2.0
    dx = 29.9 * t1 + 0.5 * 2.0 * t1 * t1 + 30.0 * (0.1 - t1)
    assert s.v == 30.0
    assert s.x == pytest.approx(dx, abs=1e-12)


def test_step_exact_saturation_at_vmin():
    s = step(VehicleState(0.0, 0.2, 0.0), -4.0, 0.1, LIMITS)
    t1 = 0.2 / 4.0
    assert s.v == 0.0
    assert s.x == pytest.approx(0.2 * t1 - 0.5 * 4.0 * t1 * t1, abs=1e-12)


def test_step_holds_at_bounds():
    s = step(VehicleState(0.0, 30.0, 0.0), 1.0, 0.1, LIMITS)
    assert s.v == 30.0 and s.x == pytest.approx(3.0)
    s = step(VehicleState(0.0, 0.0, 0.0), -1.0, 0.1, LIMITS)
    assert s.v == 0.0 and s.x == 0.0


def test_step_rejects_out_of_box_input():
    with pytest.raises(ActuatorBoundError):
        step(VehicleState(0.0, 5.0, 0.0), LIMITS.u_max + 1.0, 0.1, LIMITS)
    with pytest.raises(ActuatorBoundError):
        step(VehicleState(0.0, 5.0, 0.0), LIMITS.u_min - 1.0, 0.1, LIMITS)
    with pytest.raises(ValueError):
        step(VehicleState(0.0, 5.0, 0.0), 0.0, 0.0, LIMITS)


def test_accumulate_left_endpoint():
    fuel = FuelModel()
    c = accumulate(CostAccumulator(), VehicleState(0.0, 10.0, 0.0),
                   2.0, 0.1, fuel)
    assert c.travel_time == pytest.approx(0.1)
    assert c.energy == pytest.approx(0.5 * 4.0 * 0.1)
    assert c.fuel == pytest.approx(fuel.rate(10.0, 2.0) * 0.1)


@settings(max_examples=200, deadline=None)
@given(v=st.floats(0.0, 30.0), u=st.floats(-6.0, 5.0))
def test_fuel_rate_nonnegative_and_brake_independent(v, u):
    fuel = FuelModel()
    assert fuel.rate(v, u) >= 0.0
    if u <= 0.0:
        assert fuel.rate(v, u) == fuel.rate(v, 0.0)
