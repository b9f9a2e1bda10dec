"""Per-step safety-filtered control.

Builds constraints that are linear in the decision pair (u, e) from control
barrier functions (rear-end, merging, speed limits), a control Lyapunov row
for speed tracking, and the actuator box, then solves

    min 0.5 (u - u_ref)^2 + lam * e^2   s.t. the rows

exactly by enumerating active sets of size <= 2.  Robust variants of the
barrier rows minimize the full left-hand side over the bounded-noise box
analytically (the rows are affine in the estimated states).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

GE = ">="
LE = "<="


@dataclass(frozen=True)
class LinearConstraint:
    coeff_u: float
    coeff_e: float
    rhs: float
    sense: str   # GE | LE, meaning coeff_u*u + coeff_e*e  sense  rhs
    tag: str
    hard: bool = True

    def normalized(self):
        """As (a, b, c) with a*u + b*e <= c."""
        if self.sense == LE:
            return (self.coeff_u, self.coeff_e, self.rhs)
        return (-self.coeff_u, -self.coeff_e, -self.rhs)

    def violation(self, u, e):
        a, b, c = self.normalized()
        return a * u + b * e - c


@dataclass(frozen=True)
class Gains:
    phi: float = 1.8       # reaction time [s]
    delta: float = 3.78    # minimum safe distance [m]
    k_rear: float = 1.0    # class-K slope per constraint class
    k_merge: float = 1.0
    k_limit: float = 1.0
    c3: float = 1.0        # CLF convergence rate
    lam: float = 10.0      # slack weight
    # extra weight on u in the barrier rows (ts/2 under zero-order hold)
    # making the one-step decrease condition exact at sample instants
    sample_pad: float = 0.0
    # standoff |u_min|*ts/2 subtracted from the gap rows; absorbs the
    # predecessor's within-step speed change, which the sampled row cannot
    # see (steady-state leak disc_margin/k without it)
    disc_margin: float = 0.0


@dataclass(frozen=True)
class StepProgram:
    u_ref: float
    v_ref: float
    lam: float
    constraints: tuple
    u_min: float
    u_max: float


@dataclass(frozen=True)
class StepSolution:
    u: float
    e: float
    active_set: tuple
    feasible: bool
    objective: float = 0.0


def reference_control(v, policy="constant", v_free=15.0, ramp_accel=1.0):
    """Reference (u_ref, v_ref) before safety filtering.

    "constant": u_ref = 0, track the free-flow speed through the CLF.
    "time_energy": constant-acceleration profile toward the free-flow speed.
    """
    if policy == "constant":
        return 0.0, v_free
    if policy == "time_energy":
        err = v_free - v
        if abs(err) < 1e-6:
            return 0.0, v_free
        return math.copysign(ramp_accel, err), v_free
    raise ValueError("unknown reference policy %r" % policy)


def _robust_margin(eps, grads):
    return eps * sum(abs(g) for g in grads)


def rear_end_constraint(x_i, v_i, x_ip, v_ip, gains, tag,
                        eps=0.0, noisy=(), rho=0.0):
    """CBF row for the rear-end gap b = x_ip - x_i - phi*v_i - delta.

    ``noisy`` lists which of {"x_ip", "v_ip", "x_i", "v_i"} are estimates with
    l-inf noise bound eps; the row is tightened by the worst case of the full
    left-hand side over the noise box.  rho > 0 relaxes the class-K gain
    (used while closing on a flagged-fake predecessor out of sensing range).
    """
    if eps < 0:
        raise ValueError("noise bound eps must be >= 0")
    k = gains.k_rear + rho
    b = x_ip - x_i - gains.phi * v_i - gains.delta
    const = (v_ip - v_i) + k * (b - gains.disc_margin / k)
    grad = {"x_ip": -k, "x_i": k, "v_i": 1.0 + k * gains.phi, "v_ip": -1.0}
    const -= _robust_margin(eps, [grad[n] for n in noisy])
    # const - (phi + pad)*u >= 0
    return LinearConstraint(coeff_u=-(gains.phi + gains.sample_pad),
                            coeff_e=0.0, rhs=-const, sense=GE, tag=tag)


def merging_constraint(d_i, v_i, d_im, v_im, gains, tag,
                       eps=0.0, noisy=(), rho=0.0):
    """CBF row for the merging gap in remaining-distance coordinates.

    b = d_i - d_im - phi*v_i - delta, where d is each vehicle's distance to
    the shared merging point.  This continuous surrogate is strictly stronger
    than the gap condition at the merge instant.
    """
    if eps < 0:
        raise ValueError("noise bound eps must be >= 0")
    k = gains.k_merge + rho
    b = d_i - d_im - gains.phi * v_i - gains.delta
    const = (v_im - v_i) + k * (b - gains.disc_margin / k)
    # distances shrink as positions grow: d = x_mp - x, so dd/dw_x = +1
    # for the underlying position estimates; expressed directly in the
    # (d_i, v_i, d_im, v_im) coordinates below.
    grad = {"d_i": -k, "d_im": k, "v_i": 1.0 + k * gains.phi, "v_im": -1.0}
    const -= _robust_margin(eps, [grad[n] for n in noisy])
    return LinearConstraint(coeff_u=-(gains.phi + gains.sample_pad),
                            coeff_e=0.0, rhs=-const, sense=GE, tag=tag)


def hold_constraint(d_i, v_i, gains, u_min, tag, ts=0.0, margin=None,
                    decel_fraction=0.9):
    """Stop-before-point CBF used when a merge predecessor is still behind
    or the plain merging gap is not yet established.

    b = d_i - margin - v_i^2 / (2a) with a = decel_fraction*|u_min| keeps the
    vehicle able to stop ``margin`` meters before the merging point.  The row
    reduces to u <= a*(k*b - v)/v; near standstill that bound diverges, so it
    is clamped at -v/ts (a full stop within one sampling step), which costs
    at most v*ts/2 of position overshoot against the continuous row and keeps
    the program compatible with the lower speed limit.
    """
    if margin is None:
        margin = gains.delta
    a = decel_fraction * abs(u_min)
    b = d_i - margin - v_i * v_i / (2.0 * a)
    if v_i > 1e-12:
        bound = a * (gains.k_merge * b - v_i) / v_i
    else:
        bound = math.inf if b >= 0 else -math.inf
    if ts > 0:
        bound = max(bound, -v_i / ts)
    if bound == math.inf:
        bound = -u_min  # vacuous: within the actuator box anyway
    return LinearConstraint(coeff_u=1.0, coeff_e=0.0, rhs=bound,
                            sense=LE, tag=tag)


def limit_constraints(v, limits, gains):
    """Speed-limit CBF rows plus the actuator box.

    The lower speed row uses the steeper of k_limit and 2/(2*sample_pad)
    = 1/ts so it never forbids braking that still keeps v >= v_min after
    one zero-order-hold step; with k_limit alone it would conflict with a
    stop-before-point row during hard stops.
    """
    k_lo = gains.k_limit
    if gains.sample_pad > 0:
        k_lo = max(k_lo, 1.0 / (2.0 * gains.sample_pad))
    return (
        LinearConstraint(1.0, 0.0, gains.k_limit * (limits.v_max - v), LE,
                         "vmax"),
        LinearConstraint(1.0, 0.0, -k_lo * (v - limits.v_min), GE,
                         "vmin"),
        LinearConstraint(1.0, 0.0, limits.u_max, LE, "umax"),
        LinearConstraint(1.0, 0.0, limits.u_min, GE, "umin"),
    )


def clf_row(v, v_ref, c3):
    """Soft speed-tracking row 2(v - v_ref) u + c3 (v - v_ref)^2 <= e."""
    dv = v - v_ref
    return LinearConstraint(coeff_u=2.0 * dv, coeff_e=-1.0,
                            rhs=-c3 * dv * dv, sense=LE, tag="clf",
                            hard=False)


def build_program(u_ref, v_ref, v, limits, gains, extra_rows=()):
    rows = list(limit_constraints(v, limits, gains))
    rows.append(clf_row(v, v_ref, gains.c3))
    rows.extend(extra_rows)
    return StepProgram(u_ref=u_ref, v_ref=v_ref, lam=gains.lam,
                       constraints=tuple(rows),
                       u_min=limits.u_min, u_max=limits.u_max)


_FEAS_TOL = 1e-9
_OBJ_TOL = 1e-12


def _objective(u, e, u_ref, lam):
    du = u - u_ref
    return 0.5 * du * du + lam * e * e


def solve_step(program):
    """Exact minimizer of the two-variable QP by active-set enumeration.

    Ties between optima are broken toward smaller |u - u_ref|, then smaller
    |e|.  When no point satisfies all rows, ``feasible`` is False and the
    returned control is the documented fallback: the tightest upper bound
    among the barrier rows, clipped at the actuator box.
    """
    rows = [c.normalized() for c in program.constraints]
    tols = [_FEAS_TOL * max(1.0, abs(a), abs(b), abs(c)) for a, b, c in rows]
    u_ref, lam = program.u_ref, program.lam

    def feasible(u, e):
        for (a, b, c), tol in zip(rows, tols):
            if a * u + b * e > c + tol:
                return False
        return True

    best = None

    def consider(u, e):
        nonlocal best
        if not feasible(u, e):
            return
        obj = _objective(u, e, u_ref, lam)
        if best is None:
            best = (obj, abs(u - u_ref), abs(e), u, e)
            return
        cand = (obj, abs(u - u_ref), abs(e), u, e)
        scale = max(1.0, abs(best[0]))
        if cand[0] < best[0] - _OBJ_TOL * scale:
            best = cand
        elif cand[0] <= best[0] + _OBJ_TOL * scale and cand[1:3] < best[1:3]:
            best = cand

    consider(u_ref, 0.0)
    if best is not None and best[0] < _OBJ_TOL:
        # unconstrained optimum feasible; nothing can beat it
        u, e = best[3], best[4]
        return _solution(program, u, e, rows, tols, True)

    n = len(rows)
    for i in range(n):
        a, b, c = rows[i]
        den = a * a + b * b / (2.0 * lam)
        if den <= 0.0:
            continue
        mu = (c - a * u_ref) / den
        consider(u_ref + mu * a, mu * b / (2.0 * lam))
    for i in range(n):
        ai, bi, ci = rows[i]
        for j in range(i + 1, n):
            aj, bj, cj = rows[j]
            det = ai * bj - aj * bi
            scale = max(abs(ai), abs(bi), 1.0) * max(abs(aj), abs(bj), 1.0)
            if abs(det) <= 1e-12 * scale:
                continue
            u = (ci * bj - cj * bi) / det
            e = (ai * cj - aj * ci) / det
            consider(u, e)

    if best is not None:
        return _solution(program, best[3], best[4], rows, tols, True)
    return _fallback(program, rows)


def _solution(program, u, e, rows, tols, feasible):
    active = tuple(
        c.tag for c, (a, b, rc), tol in
        zip(program.constraints, rows, tols)
        if abs(a * u + b * e - rc) <= 10.0 * tol)
    return StepSolution(u=u, e=e, active_set=active, feasible=feasible,
                        objective=_objective(u, e, program.u_ref, program.lam))


def _fallback(program, rows):
    """No feasible point: brake to honor the tightest barrier upper bound."""
    ub = program.u_max
    binding = []
    for c in program.constraints:
        if c.coeff_e != 0.0 or c.tag in ("umax", "umin"):
            continue
        a, _, rhs = c.normalized()
        if a > 0.0:
            bound = rhs / a
            if bound < ub:
                ub = bound
                binding = [c.tag]
    u = min(max(program.u_min, ub), program.u_max)
    e = 0.0
    for c in program.constraints:
        if c.coeff_e != 0.0:
            a, b, rhs = c.normalized()
            # b*e <= rhs - a*u with b = -1 for the CLF row
            if b < 0.0:
                e = max(e, (a * u - rhs) / (-b))
    return StepSolution(u=u, e=e, active_set=tuple(binding), feasible=False,
                        objective=_objective(u, e, program.u_ref, program.lam))
