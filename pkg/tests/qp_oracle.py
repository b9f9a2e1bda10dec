"""Independent reference solver for the per-step control program.

The program minimizes 0.5 (u - u_ref)^2 + lam * e^2 over the rows
a*u + b*e <= c.  The oracle projects the feasible polygon onto the u axis
exactly (all pairwise row intersections are linear inequalities in u),
computes the inner minimizer over e in closed form for fixed u, and locates
the u minimizer of the resulting convex function by long ternary search
seeded from a dense grid.  It shares no code with the production solver.
"""

import math
import random

from intersim.controller import (Gains, build_program, hold_constraint,
                                 merging_constraint, rear_end_constraint)
from intersim.dynamics import VehicleLimits

INF = float("inf")


def _u_interval(rows, u_min, u_max):
    lo, hi = u_min, u_max
    ups = [(a, b, c) for a, b, c in rows if b > 0]     # e <= (c - a u)/b
    downs = [(a, b, c) for a, b, c in rows if b < 0]   # e >= (c - a u)/b
    for a, b, c in rows:
        if b == 0.0:
            if a > 0:
                hi = min(hi, c / a)
            elif a < 0:
                lo = max(lo, c / a)
            elif c < 0:
                return 1.0, -1.0
    for ad, bd, cd in downs:
        for au, bu, cu in ups:
            # (cd - ad u)/bd <= (cu - au u)/bu  with bd < 0 < bu
            # -> bu*(cd - ad u) >= bd*(cu - au u)  ->  coeff*u >= const
            coeff = -bu * ad + bd * au
            const = bd * cu - bu * cd
            if abs(coeff) < 1e-15:
                if const > 1e-12:
                    return 1.0, -1.0
                continue
            bound = const / coeff
            if coeff > 0:
                lo = max(lo, bound)
            else:
                hi = min(hi, bound)
    return lo, hi


def _inner(rows, u, lam, u_ref):
    e_lo, e_hi = -INF, INF
    for a, b, c in rows:
        if b > 0:
            e_hi = min(e_hi, (c - a * u) / b)
        elif b < 0:
            e_lo = max(e_lo, (c - a * u) / b)
        elif a * u - c > 1e-12:
            return INF, None
    if e_lo > e_hi + 1e-12:
        return INF, None
    e = min(max(0.0, e_lo), e_hi)
    du = u - u_ref
    return 0.5 * du * du + lam * e * e, e


def reference_solve(program):
    """(objective, u, e, feasible) by projection + ternary search."""
    rows = [c.normalized() for c in program.constraints]
    lo, hi = _u_interval(rows, program.u_min, program.u_max)
    if lo > hi + 1e-12:
        return INF, None, None, False
    lo, hi = max(lo, program.u_min), min(hi, program.u_max)
    if lo > hi:
        return INF, None, None, False

    def g(u):
        return _inner(rows, u, program.lam, program.u_ref)[0]

    n = 2000
    best_u = lo
    best = g(lo)
    for i in range(1, n + 1):
        u = lo + (hi - lo) * i / n
        val = g(u)
        if val < best:
            best, best_u = val, u
    span = (hi - lo) / n
    a = max(lo, best_u - 2 * span)
    b = min(hi, best_u + 2 * span)
    for _ in range(300):
        m1 = a + (b - a) / 3.0
        m2 = b - (b - a) / 3.0
        if g(m1) <= g(m2):
            b = m2
        else:
            a = m1
    u = 0.5 * (a + b)
    obj, e = _inner(rows, u, program.lam, program.u_ref)
    return obj, u, e, True


def random_program(rng):
    """A seeded per-step program mixing every production row type."""
    ts = 0.1
    limits = VehicleLimits()
    gains = Gains(phi=1.8, delta=3.78,
                  k_rear=rng.uniform(0.5, 2.0),
                  k_merge=rng.uniform(0.5, 2.0),
                  k_limit=1.0, c3=rng.uniform(0.5, 2.0),
                  lam=rng.uniform(1.0, 20.0),
                  sample_pad=ts / 2.0,
                  disc_margin=abs(limits.u_min) * ts / 2.0)
    v = rng.uniform(0.0, limits.v_max)
    u_ref = rng.uniform(limits.u_min, limits.u_max)
    v_ref = rng.uniform(0.0, limits.v_max)
    rows = []
    slack = gains.phi * v + gains.delta
    for i in range(rng.randint(0, 2)):
        x_i = rng.uniform(0.0, 200.0)
        x_p = x_i + slack + rng.uniform(-1.0, 40.0)
        if rng.random() < 0.1:
            x_p = x_i + rng.uniform(0.0, slack)  # occasionally violated gap
        eps = rng.choice([0.0, 0.0, 0.2])
        noisy = ("x_ip", "v_ip") if eps else ()
        rows.append(rear_end_constraint(
            x_i, v, x_p, rng.uniform(0.0, 20.0), gains, "rear%d" % i,
            eps=eps, noisy=noisy, rho=rng.choice([0.0, 2.0])))
    for i in range(rng.randint(0, 2)):
        d_i = rng.uniform(40.0, 200.0)
        d_m = d_i - slack - rng.uniform(-1.0, 30.0)
        if rng.random() < 0.1:
            d_m = d_i - rng.uniform(0.0, slack)
        rows.append(merging_constraint(
            d_i, v, max(d_m, 1.0), rng.uniform(0.0, 20.0), gains,
            "merge%d" % i))
    if rng.random() < 0.3:
        stop = v * v / (2.0 * 0.9 * abs(limits.u_min))
        rows.append(hold_constraint(
            gains.delta + stop + rng.uniform(0.0, 60.0), v, gains,
            limits.u_min, "hold", ts=ts))
    return build_program(u_ref, v_ref, v, limits, gains, tuple(rows))


def seeded_programs(count, seed=20240501):
    rng = random.Random(seed)
    return [random_program(rng) for _ in range(count)]
