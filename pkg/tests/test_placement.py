import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from obspart.errors import InfeasibleError
from obspart.maximize import SolverConfig
from obspart.measures import Metric, measure
from obspart.oracle import brute_placement
from obspart.partition import Partition
from obspart.placement import bound_check, budgets_from_total, solve_placement
from obspart.sysmodel import ContributionGramians, LtiSystem, contribution_gramians, full_gramian, random_stable_system

E = 1 - 1 / np.e


def sized(*sizes):
    blocks, start = [], 0
    for s in sizes:
        blocks.append(tuple(range(start, start + s)))
        start += s
    return Partition(len(sizes), tuple(blocks))


def test_budget_examples():
    assert budgets_from_total(sized(3, 3), 4) == (2, 2)
    assert budgets_from_total(sized(4, 1, 1), 3) == (2, 1, 0)
    assert budgets_from_total(sized(4, 1, 1), 0) == (0, 0, 0)
    with pytest.raises(InfeasibleError, match="6"):
        budgets_from_total(sized(3, 3), 7)


@given(st.lists(st.integers(0, 6), min_size=1, max_size=5), st.data())
def test_budgets_sum_and_caps(sizes, data):
    if sum(sizes) == 0:
        sizes = sizes + [1]
    p = sized(*sizes)
    r = data.draw(st.integers(0, sum(sizes)))
    b = budgets_from_total(p, r)
    assert sum(b) == r
    assert all(0 <= bi <= s for bi, s in zip(b, sizes))


def zero_system(weights):
    """A=0 and scaled identity outputs: contribution v is w_v e_v e_v^T."""
    return LtiSystem(np.zeros((len(weights), len(weights))), np.diag(np.sqrt(weights)))


def test_unconstrained_budgets_select_everything():
    s = random_stable_system(5, seed=3)
    c = contribution_gramians(s, 200)
    p = sized(2, 3)
    m = Metric("logdet")
    cfg, _ = solve_placement(c, p, (2, 3), "global", m)
    assert cfg.selected == (0, 1, 2, 3, 4)
    W = full_gramian(c).W
    assert cfg.raw_value == pytest.approx(measure(W, m), rel=1e-10)


def test_trace_modes_agree_on_modular_fixture():
    c = contribution_gramians(zero_system([1.0, 4.0, 2.0, 3.0]), 5)
    p = sized(2, 2)
    for mode in ("global", "local"):
        cfg, _ = solve_placement(c, p, (2, 2), mode, Metric("trace"), total=2)
        assert cfg.selected == (1, 3)
        assert cfg.value == pytest.approx(7.0)


def test_infeasible_budgets():
    c = contribution_gramians(random_stable_system(3, seed=1), 10)
    with pytest.raises(InfeasibleError):
        solve_placement(c, sized(1, 2), (2, 0))
    with pytest.raises(InfeasibleError):
        solve_placement(c, sized(1, 2), (1,))


@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("mode", ["global", "local"])
def test_ratios_against_brute_force(seed, mode):
    s = random_stable_system(6, seed=40 + seed)
    c = contribution_gramians(s, 500)
    p = sized(3, 3)
    m = Metric("logdet")
    _, opt = brute_placement(c, p, (2, 1), mode, m)
    g, _ = solve_placement(c, p, (2, 1), mode, m, "greedy")
    assert g.value >= 0.5 * opt
    cg, _ = solve_placement(c, p, (2, 1), mode, m, "continuous", SolverConfig(samples=200, seed=seed))
    assert cg.value >= (E - 0.05) * opt
    assert sum(v < 3 for v in cg.selected) <= 2 and sum(v >= 3 for v in cg.selected) <= 1


def test_bound_trace_equality():
    c = contribution_gramians(random_stable_system(5, seed=2), 100)
    d = bound_check(c, sized(2, 3), [0, 2, 4], Metric("trace"))
    assert d.holds and abs(d.gap) <= 1e-9


def test_bound_rank_on_decoupled_pair():
    c = contribution_gramians(zero_system([1.0, 1.0]), 5)
    d = bound_check(c, sized(1, 1), [0, 1], Metric("rank"))
    assert (d.global_value, d.local_value, d.holds) == (2.0, 2.0, True)


def test_bound_logdet_scalar_cases():
    p = sized(1, 1)
    m = Metric("logdet", epsilon=0.0)
    big = bound_check(ContributionGramians("custom", np.array([[[6.0]], [[6.0]]])), p, [0, 1], m)
    assert big.global_value == pytest.approx(np.log(12)) and big.local_value == pytest.approx(np.log(36))
    assert not big.holds
    small = bound_check(ContributionGramians("custom", np.array([[[0.5]], [[0.5]]])), p, [0, 1], m)
    assert small.global_value == pytest.approx(0.0) and small.local_value == pytest.approx(np.log(0.25))
    assert small.holds


@given(st.integers(0, 10**6), st.integers(1, 4))
def test_feasibility_and_bound_structure(seed, kappa):
    rng = np.random.default_rng(seed)
    s = random_stable_system(6, seed=seed)
    c = contribution_gramians(s, 60)
    p = Partition.from_labels(rng.integers(0, kappa, 6), kappa)
    budgets = budgets_from_total(p, int(rng.integers(0, 7)))
    cfg, _ = solve_placement(c, p, budgets, "global", Metric(), "greedy")
    for b, r in zip(p.blocks, budgets):
        assert len(set(cfg.selected) & set(b)) <= r
    R = np.flatnonzero(rng.random(6) < 0.5)
    assert bound_check(c, p, R, Metric("trace")).holds
    assert bound_check(c, p, R, Metric("rank")).gap <= 0


@given(st.integers(0, 10**6), st.integers(1, 5))
def test_global_value_partition_invariant(seed, r):
    rng = np.random.default_rng(seed)
    c = contribution_gramians(random_stable_system(6, seed=seed), 80)
    values = []
    for kappa in (1, 2, 3):
        p = Partition.from_labels(rng.integers(0, kappa, 6), kappa)
        cfg, _ = solve_placement(c, p, [len(b) for b in p.blocks], "global", Metric(), total=r)
        values.append(cfg.value)
    assert max(values) - min(values) <= 1e-9 * max(1.0, abs(values[0]))


@given(st.integers(0, 10**6))
def test_local_optimum_not_above_global_raw(seed):
    c = contribution_gramians(random_stable_system(6, seed=seed), 80)
    p = sized(3, 3)
    m = Metric("logdet")
    g, _ = brute_placement(c, p, (2, 1), "global", m)
    loc, _ = brute_placement(c, p, (2, 1), "local", m)
    assert loc.raw_value <= g.raw_value
