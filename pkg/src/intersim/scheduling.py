"""Exact sequencing of queue indices under precedence constraints.

Solves  max sum w_i * a_i  over bijections from the candidate vehicles onto
the candidate index values, subject to precedence rows a_j - a_k >= nu.
Instances are small; the solver branches on which vehicle receives the
largest remaining index, bounding with the rearrangement inequality (largest
weights paired with largest indices).  Ties preserve the current relative
order (FIFO-stable): candidates are explored in descending weight and, within
equal weight, descending current index, and only strict improvements replace
the incumbent.

Above ``exact_cap`` candidates, a greedy topological assignment is used and
flagged to the caller.
"""

from __future__ import annotations

from dataclasses import dataclass


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class ScheduleProblem:
    candidates: tuple          # current indices, ascending
    weights: dict              # current index -> weight
    precedence: tuple          # (j, k) pairs: a_j - a_k >= nu
    nu: int = 1
    index_values: tuple = None  # values to assign; defaults to candidates
    floors: dict = None        # candidate -> minimum assignable value

    def __post_init__(self):
        if self.nu < 1:
            raise ScheduleError("nu must be >= 1")
        values = self.index_values or self.candidates
        object.__setattr__(self, "index_values", tuple(sorted(values)))
        object.__setattr__(self, "floors", dict(self.floors or {}))
        if len(self.index_values) != len(self.candidates):
            raise ScheduleError("need exactly one index value per candidate")
        cset = set(self.candidates)
        for i in self.floors:
            if i not in cset:
                raise ScheduleError("floor for %r outside the candidate set"
                                    % (i,))
        for j, k in self.precedence:
            if j not in cset or k not in cset:
                raise ScheduleError("precedence pair (%r, %r) outside the "
                                    "candidate set" % (j, k))
        if _has_cycle(self.candidates, self.precedence):
            raise ScheduleError("precedence graph has a cycle")


def _has_cycle(nodes, pairs):
    succ = {n: [] for n in nodes}
    indeg = {n: 0 for n in nodes}
    for j, k in pairs:   # k before j
        succ[k].append(j)
        indeg[j] += 1
    stack = [n for n in nodes if indeg[n] == 0]
    seen = 0
    while stack:
        n = stack.pop()
        seen += 1
        for m in succ[n]:
            indeg[m] -= 1
            if indeg[m] == 0:
                stack.append(m)
    return seen != len(nodes)


@dataclass(frozen=True)
class ScheduleResult:
    assignment: dict           # current index -> new index
    objective: float
    exact: bool


def solve_schedule(problem, exact_cap=12):
    """Optimal index assignment, or the greedy fallback above the cap."""
    if len(problem.candidates) > exact_cap:
        return _greedy(problem)
    order = sorted(problem.candidates,
                   key=lambda i: (-problem.weights[i], -i))
    after = {i: set() for i in problem.candidates}   # i -> must come after
    before = {i: set() for i in problem.candidates}  # i -> must come before
    for j, k in problem.precedence:
        after[j].add(k)    # j after k
        before[k].add(j)
    values = problem.index_values
    weights = problem.weights
    nu = problem.nu

    best_obj = -float("inf")
    best_assign = None
    assign = {}

    def recurse(level, done_obj, unassigned):
        nonlocal best_obj, best_assign
        if not unassigned:
            if done_obj > best_obj:
                best_obj = done_obj
                best_assign = dict(assign)
            return
        value = values[len(unassigned) - 1]
        # optimistic bound: pair remaining values descending with remaining
        # weights descending (rearrangement inequality)
        rem_w = sorted((weights[i] for i in unassigned), reverse=True)
        opt = done_obj
        for off, w in enumerate(rem_w):
            opt += w * values[len(unassigned) - 1 - off]
        if opt <= best_obj:
            return
        for cand in order:
            if cand not in unassigned:
                continue
            if value < problem.floors.get(cand, value):
                continue
            # cand takes the largest remaining value: everyone that must be
            # after cand must already be assigned, with enough gap
            if any(j in unassigned for j in before[cand]):
                continue
            if any(assign[j] - value < nu for j in before[cand]
                   if j in assign):
                continue
            assign[cand] = value
            unassigned.remove(cand)
            recurse(level + 1, done_obj + weights[cand] * value, unassigned)
            unassigned.add(cand)
            del assign[cand]

    recurse(0, 0.0, set(problem.candidates))
    if best_assign is None:
        raise ScheduleError("no assignment satisfies the precedence rows")
    return ScheduleResult(assignment=best_assign, objective=best_obj,
                          exact=True)


def _greedy(problem):
    """Weight-descending topological assignment of descending indices."""
    after = {i: set() for i in problem.candidates}
    before = {i: set() for i in problem.candidates}
    for j, k in problem.precedence:
        after[j].add(k)
        before[k].add(j)
    unassigned = set(problem.candidates)
    assign = {}
    for value in reversed(problem.index_values):
        eligible = [i for i in unassigned
                    if value >= problem.floors.get(i, value)
                    and not (before[i] & unassigned)
                    and all(assign[j] - value >= problem.nu
                            for j in before[i] if j in assign)]
        if not eligible:
            # nu > 1 can wedge the greedy order; keep the current sequence
            ident = {i: i for i in problem.candidates}
            obj = sum(problem.weights[i] * i for i in problem.candidates)
            return ScheduleResult(assignment=ident, objective=obj,
                                  exact=False)
        pick = max(eligible, key=lambda i: (problem.weights[i], i))
        assign[pick] = value
        unassigned.remove(pick)
    obj = sum(problem.weights[i] * a for i, a in assign.items())
    return ScheduleResult(assignment=assign, objective=obj, exact=False)
