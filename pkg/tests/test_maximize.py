import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import coverage, modular
from obspart.errors import InfeasibleError
from obspart.matroids import build_extended_matroid, partition_matroid, uniform_matroid
from obspart.maximize import (
    FractionalPoint,
    SolverConfig,
    continuous_greedy,
    derive_seed,
    gradient_estimate,
    greedy,
    multilinear_estimate,
    round_fractional,
    solve,
)
from obspart.measures import GramianSetFunction, Metric
from obspart.partition import build_p2_objective
from obspart.sysmodel import contribution_gramians, random_stable_system

E = 1 - 1 / np.e
THREE_SETS = [{1, 2, 3}, {3, 4}, {4, 5}]


def brute_opt(f, M):
    best = 0.0
    for k in range(M.size + 1):
        for S in itertools.combinations(range(M.size), k):
            if M.is_independent(S):
                best = max(best, f(S))
    return best


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(steps=0)
    with pytest.raises(ValueError):
        SolverConfig(samples=0)
    with pytest.raises(ValueError):
        SolverConfig(rounding="swap")


def test_derive_seed_distinct():
    seeds = {derive_seed(7, 0, t) for t in range(50)} | {derive_seed(7, 1)}
    assert len(seeds) == 51
    assert derive_seed(7, 0, 3) == derive_seed(7, 0, 3)


def test_greedy_modular():
    S, trace = greedy(modular([3, 1, 2]), uniform_matroid(3, 2))
    assert S == {0, 2}
    assert trace.objective[-1] == 5
    assert len(trace.gains) == len(trace.evaluations) == 2


def test_greedy_partition_blocks():
    S, _ = greedy(modular([3, 5, 2]), partition_matroid([[0, 1], [2]], [1, 1]))
    assert S == {1, 2}


def test_greedy_coverage_vs_oracle():
    f = coverage(THREE_SETS)
    M = uniform_matroid(3, 2)
    S, _ = greedy(f, M)
    assert S == {0, 2} and f(S) == 5
    assert f(S) >= 0.5 * brute_opt(f, M)


def test_greedy_ties_lowest_index():
    S, _ = greedy(modular([1, 1, 1, 1]), uniform_matroid(4, 2))
    assert S == {0, 1}


def test_greedy_stops_without_positive_gain():
    S, _ = greedy(modular([2, 0, -1]), uniform_matroid(3, 3))
    assert S == {0}


def test_multilinear_examples():
    f = modular([1, 1])
    est, se = multilinear_estimate(f, [0.5, 0.5], 400, seed=1, return_std=True)
    assert abs(est - 1.0) <= 3 * se
    g = coverage([{1}, {1}])
    est, se = multilinear_estimate(g, [0.5, 0.5], 400, seed=2, return_std=True)
    assert abs(est - 0.75) <= 3 * se
    est, se = multilinear_estimate(g, [1.0, 0.0], 50, seed=3, return_std=True)
    assert est == g([0]) and se == 0.0


def test_gradient_examples():
    w = np.array([2.0, -1.0, 0.5])
    assert np.array_equal(gradient_estimate(modular(w), [0.3, 0.9, 0.1], 30, seed=4), w)
    g = coverage([{1}, {1}])
    assert np.array_equal(gradient_estimate(g, [0.0, 0.0], 20, seed=5), [1.0, 1.0])
    grad, se = gradient_estimate(g, [1.0, 0.0], 20, seed=6, return_std=True)
    assert abs(grad[1]) <= 3 * se[1] + 1e-12


def test_workers_do_not_change_results():
    f = coverage(THREE_SETS + [{1, 5}, {2}])
    x = [0.2, 0.5, 0.7, 0.1, 0.9]
    a = gradient_estimate(f, x, 64, seed=9, workers=1)
    b = gradient_estimate(f, x, 64, seed=9, workers=4)
    assert np.array_equal(a, b)
    cfg1, cfg4 = SolverConfig(seed=3, workers=1), SolverConfig(seed=3, workers=4)
    M = uniform_matroid(5, 2)
    assert np.array_equal(continuous_greedy(f, M, cfg1)[0].x, continuous_greedy(f, M, cfg4)[0].x)


def test_continuous_modular_recovers_greedy():
    f = modular([3, 1, 2, 5])
    M = partition_matroid([[0, 1], [2, 3]], [1, 1])
    x, trace = continuous_greedy(f, M, SolverConfig(steps=10, samples=5))
    assert np.allclose(x.x, [1, 0, 0, 1])
    assert len(trace) == 10
    for method in ("randomized", "pipage"):
        assert round_fractional(x, M, method, f, 5, 0) == greedy(f, M)[0]


def test_continuous_coverage_ratio_over_seeds():
    f = coverage(THREE_SETS)
    M = uniform_matroid(3, 2)
    opt = brute_opt(f, M)
    for seed in range(20):
        S, _ = solve(f, M, SolverConfig(steps=10, samples=200, seed=seed), "continuous")
        assert M.is_independent(S)
        assert f(S) >= (E - 0.05) * opt


def test_continuous_extended_assigns_each_state_once():
    s = random_stable_system(2, seed=12)
    f = build_p2_objective(contribution_gramians(s, 100), 2, Metric("logdet"))
    M = build_extended_matroid(2, 2)
    S, _ = solve(f, M, SolverConfig(seed=1), "continuous")
    states = sorted(e % 2 for e in S)
    assert states == [0, 1]


def test_fractional_point_checks():
    with pytest.raises(ValueError):
        FractionalPoint([1.2, 0.0])
    M = partition_matroid([[0, 1]], [1])
    assert FractionalPoint([0.4, 0.6]).check(M)
    assert not FractionalPoint([0.6, 0.6]).check(M)


def test_rounding_integral_unchanged():
    f = modular([1, 2, 3, 4])
    M = partition_matroid([[0, 1], [2, 3]], [1, 1])
    for method in ("randomized", "pipage"):
        assert round_fractional([0, 1, 1, 0], M, method, f, 10, 0) == {1, 2}


def test_randomized_frequencies():
    M = partition_matroid([[0, 1]], [1])
    hits = np.zeros(2)
    for seed in range(10_000):
        S = round_fractional([0.3, 0.7], M, "randomized", seed=seed)
        hits[list(S)] += 1
    assert hits.sum() == 10_000
    assert abs(hits[0] / 1e4 - 0.3) <= 0.02
    assert abs(hits[1] / 1e4 - 0.7) <= 0.02


def test_randomized_deficit_selects_none():
    M = partition_matroid([[0, 1]], [1])
    empty = sum(not round_fractional([0.1, 0.1], M, "randomized", seed=s) for s in range(2000))
    assert abs(empty / 2000 - 0.8) <= 0.03


def test_randomized_needs_unit_capacities():
    with pytest.raises(InfeasibleError):
        round_fractional([0.5, 0.5], partition_matroid([[0, 1]], [2]), "randomized")


@st.composite
def fractional_instances(draw):
    sizes = draw(st.lists(st.integers(1, 3), min_size=1, max_size=3))
    blocks, start = [], 0
    for size in sizes:
        blocks.append(list(range(start, start + size)))
        start += size
    caps = [draw(st.integers(1, len(b))) for b in blocks]
    x = np.zeros(start)
    for b, c in zip(blocks, caps):
        raw = np.array(draw(st.lists(st.floats(0, 1), min_size=len(b), max_size=len(b))))
        if raw.sum() > c:
            raw *= c / raw.sum()
        x[b] = np.clip(raw, 0, 1)
    w = draw(st.lists(st.floats(0, 10), min_size=start, max_size=start))
    return partition_matroid(blocks, caps, n=start), x, w


@given(fractional_instances(), st.integers(0, 1000))
def test_pipage_on_modular_never_loses_value(inst, seed):
    M, x, w = inst
    f = modular(w)
    S = round_fractional(x, M, "pipage", f, 20, seed)
    assert M.is_independent(S)
    assert f(S) >= float(np.dot(w, x)) - 1e-9


@given(st.integers(0, 10**6), st.booleans())
def test_lazy_matches_eager(seed, extended):
    s = random_stable_system(4, seed=seed)
    c = contribution_gramians(s, 80)
    kind = ["logdet", "trace", "rank"][seed % 3]
    if extended:
        f, M = build_p2_objective(c, 2, Metric(kind)), build_extended_matroid(4, 2)
    else:
        f, M = GramianSetFunction(c, Metric(kind)), partition_matroid([[0, 1], [2, 3]], [1, 2])
    assert greedy(f, M, lazy=True)[0] == greedy(f, M, lazy=False)[0]


@given(st.integers(0, 10**6))
def test_solvers_feasible(seed):
    rng = np.random.default_rng(seed)
    sets = [set(rng.choice(8, size=rng.integers(1, 4), replace=False).tolist()) for _ in range(6)]
    f = coverage(sets)
    M = partition_matroid([[0, 1, 2], [3, 4, 5]], [1, 2])
    for solver in ("greedy", "continuous"):
        S, _ = solve(f, M, SolverConfig(steps=4, samples=10, seed=seed), solver)
        assert M.is_independent(S)


def test_unknown_solver():
    with pytest.raises(ValueError):
        solve(modular([1]), uniform_matroid(1, 1), SolverConfig(), "annealing")
