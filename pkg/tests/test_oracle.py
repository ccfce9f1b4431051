import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import coverage, modular
from obspart.errors import GuardError
from obspart.measures import GramianSetFunction, Metric, SetFunction
from obspart.oracle import brute_partition, brute_placement, check_submodular_monotone
from obspart.partition import Partition, build_p2_objective
from obspart.sysmodel import contribution_gramians, random_stable_system


def naive_violations(f, n, slack=1e-9):
    """Triple loop over all (A subset of B, s not in B) plus all subset pairs."""
    subsets = [frozenset(c) for k in range(n + 1) for c in itertools.combinations(range(n), k)]
    sub, mono = set(), set()
    for B in subsets:
        for A in subsets:
            if not A <= B:
                continue
            if f(A) > f(B) + slack:
                mono.add(B)
            for s in range(n):
                if s in B:
                    continue
                if f(A | {s}) - f(A) < f(B | {s}) - f(B) - slack:
                    sub.add((B, s))
    return sub, mono


def test_trace_partition_ties_keep_first():
    c = contribution_gramians(random_stable_system(4, seed=1), 50)
    p, value = brute_partition(c, 2, Metric("trace"))
    assert p.blocks == ((0, 1, 2, 3), ())
    assert value == pytest.approx(np.trace(c.contribs.sum(axis=0)))


def test_kappa_one_single_assignment():
    c = contribution_gramians(random_stable_system(3, seed=2), 50)
    p, _ = brute_partition(c, 1, Metric())
    assert p.blocks == ((0, 1, 2),)


def test_partition_guard():
    c = contribution_gramians(random_stable_system(13, seed=0), 5)
    with pytest.raises(GuardError):
        brute_partition(c, 3, Metric())


def test_placement_examples():
    c = contribution_gramians(random_stable_system(4, seed=3), 100)
    p = Partition(2, ((0, 1), (2, 3)))
    full, _ = brute_placement(c, p, (2, 2), "global", Metric())
    assert full.selected == (0, 1, 2, 3)
    for kind in ("trace", "logdet", "rank"):
        m = Metric(kind)
        one, value = brute_placement(c, p, (1, 1), "global", m, total=1)
        g = GramianSetFunction(c, m)
        singles = [g([v]) for v in range(4)]
        assert value == pytest.approx(max(singles))
        assert one.selected == (int(np.argmax(singles)),)


def test_placement_guard():
    c = contribution_gramians(random_stable_system(24, seed=0), 2)
    p = Partition.single(24)
    with pytest.raises(GuardError):
        brute_placement(c, p, (12,), "global", Metric())


def test_checker_modular_and_coverage_clean():
    assert check_submodular_monotone(modular([1, 2, 0.5, 3]), 4) == []
    assert check_submodular_monotone(coverage([{1, 2}, {2, 3}, {3}, {4, 1}]), 4) == []


def test_checker_supermodular_witness():
    f = SetFunction(3, lambda key: float(len(key) ** 2))
    found = check_submodular_monotone(f, 3)
    assert found
    first = found[0]
    assert (first.kind, first.A, first.B, first.s) == ("submodular", (), (0,), 1)


def test_checker_detects_non_monotone():
    f = SetFunction(2, lambda key: -float(len(key)))
    found = check_submodular_monotone(f, 2)
    assert {w.B for w in found if w.kind == "monotone"} == {(0,), (1,), (0, 1)}


def test_checker_guard():
    with pytest.raises(GuardError):
        check_submodular_monotone(modular(np.ones(13)), 13)


@given(st.lists(st.floats(-3, 3), min_size=4, max_size=4), st.integers(0, 10**6))
def test_checker_agrees_with_naive(weights, seed):
    rng = np.random.default_rng(seed)
    table = rng.normal(size=16) + np.array([bin(m).count("1") for m in range(16)]) * weights[0]

    def f(S):
        return float(table[sum(1 << i for i in S)])

    found = check_submodular_monotone(f, 4)
    sub, mono = naive_violations(f, 4)
    assert {(frozenset(w.B), w.s) for w in found if w.kind == "submodular"} == sub
    assert {frozenset(w.B) for w in found if w.kind == "monotone"} == mono


@given(st.integers(0, 10**6))
def test_gramian_objectives_are_polymatroids(seed):
    c = contribution_gramians(random_stable_system(4, seed=seed), 100)
    for kind in ("trace", "logdet", "rank"):
        assert check_submodular_monotone(GramianSetFunction(c, Metric(kind)), 4) == []
        assert check_submodular_monotone(build_p2_objective(c, 2, Metric(kind)), 8) == []
