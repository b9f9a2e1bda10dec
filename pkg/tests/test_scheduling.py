"""Index-assignment solver against a brute-force permutation oracle."""

import itertools
import random

import pytest
from hypothesis import given, settings, strategies as st

from intersim.scheduling import (ScheduleError, ScheduleProblem,
                                 solve_schedule)


def brute_force(problem):
    """Enumerate every permutation of values onto candidates."""
    best = None
    best_obj = -float("inf")
    cands = problem.candidates
    for perm in itertools.permutations(problem.index_values):
        assign = dict(zip(cands, perm))
        if any(assign[i] < problem.floors.get(i, assign[i])
               for i in cands):
            continue
        if any(assign[j] - assign[k] < problem.nu
               for j, k in problem.precedence):
            continue
        obj = sum(problem.weights[i] * assign[i] for i in cands)
        if obj > best_obj:
            best_obj = obj
            best = assign
    return best, best_obj


def random_problem(rng, max_n=8):
    n = rng.randint(2, max_n)
    base = rng.randint(1, 30)
    candidates = tuple(sorted(rng.sample(range(base, base + 4 * n), n)))
    weights = {i: round(rng.uniform(0.0, 2.0), 6) for i in candidates}
    # random acyclic precedence: j after k only for k < j in a random order
    order = list(candidates)
    rng.shuffle(order)
    pairs = []
    for a in range(n):
        for b in range(a + 1, n):
            if rng.random() < 0.25:
                pairs.append((order[b], order[a]))  # order[b] after order[a]
    floors = {}
    for i in candidates:
        if rng.random() < 0.2:
            floors[i] = rng.choice(candidates)
    problem = ScheduleProblem(candidates=candidates, weights=weights,
                              precedence=tuple(pairs), floors=floors)
    return problem


def test_matches_brute_force_on_1000_seeded_instances():
    rng = random.Random(987654)
    solved = 0
    for _ in range(1000):
        problem = random_problem(rng)
        oracle, oracle_obj = brute_force(problem)
        if oracle is None:
            with pytest.raises(ScheduleError):
                solve_schedule(problem)
            continue
        res = solve_schedule(problem)
        assert res.exact
        assert res.objective == pytest.approx(oracle_obj, abs=1e-9)
        # optimal objective and all rows satisfied
        assign = res.assignment
        assert sorted(assign.values()) == sorted(problem.index_values)
        for j, k in problem.precedence:
            assert assign[j] - assign[k] >= problem.nu
        for i, f in problem.floors.items():
            assert assign[i] >= f
        solved += 1
    assert solved > 700  # the generator rarely produces infeasible rows


def test_identity_is_optimal_for_uniform_weights_no_rows():
    problem = ScheduleProblem(candidates=(1, 2, 3), weights={1: 1, 2: 1, 3: 1},
                              precedence=())
    res = solve_schedule(problem)
    assert res.objective == pytest.approx(1 + 2 + 3)


def test_heavier_weight_gets_larger_index():
    problem = ScheduleProblem(candidates=(1, 2), weights={1: 5.0, 2: 1.0},
                              precedence=())
    res = solve_schedule(problem)
    assert res.assignment == {1: 2, 2: 1}


def test_precedence_blocks_swap():
    # index 2 must stay after index 1 (a_2 - a_1 >= 1)
    problem = ScheduleProblem(candidates=(1, 2), weights={1: 5.0, 2: 1.0},
                              precedence=((2, 1),))
    res = solve_schedule(problem)
    assert res.assignment == {1: 1, 2: 2}


def test_floor_blocks_promotion():
    problem = ScheduleProblem(candidates=(3, 7), weights={3: 0.0, 7: 9.0},
                              precedence=(), floors={7: 7})
    res = solve_schedule(problem)
    assert res.assignment[7] == 7


def test_cycle_rejected():
    with pytest.raises(ScheduleError):
        ScheduleProblem(candidates=(1, 2), weights={1: 1, 2: 1},
                        precedence=((1, 2), (2, 1)))


def test_foreign_floor_rejected():
    with pytest.raises(ScheduleError):
        ScheduleProblem(candidates=(1, 2), weights={1: 1, 2: 1},
                        precedence=(), floors={9: 1})


def test_greedy_above_cap_is_valid():
    rng = random.Random(4)
    for _ in range(50):
        problem = random_problem(rng, max_n=8)
        res = solve_schedule(problem, exact_cap=3)
        if len(problem.candidates) <= 3:
            continue
        assert not res.exact
        assign = res.assignment
        assert sorted(assign.values()) == sorted(problem.index_values)
        if assign != {i: i for i in problem.candidates}:
            for j, k in problem.precedence:
                assert assign[j] - assign[k] >= problem.nu


@settings(max_examples=150, deadline=None)
@given(st.integers(2, 6), st.randoms(use_true_random=False))
def test_property_assignment_is_feasible_permutation(n, rng):
    problem = random_problem(rng, max_n=n)
    oracle, _ = brute_force(problem)
    if oracle is None:
        return
    res = solve_schedule(problem)
    assign = res.assignment
    assert sorted(assign.values()) == sorted(problem.index_values)
    for j, k in problem.precedence:
        assert assign[j] - assign[k] >= problem.nu
