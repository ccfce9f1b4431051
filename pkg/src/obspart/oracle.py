"""Exhaustive baselines and property checkers for small instances."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb, prod
from typing import Callable, Sequence

import numpy as np

from .errors import GuardError
from .measures import GramianSetFunction, Metric
from .partition import Partition
from .placement import SensorConfig, placement_matroid, placement_objective
from .sysmodel import ContributionGramians

GUARD = 10**6
MAX_CHECK = 12


def _better(value: float, best: float) -> bool:
    return value > best + 1e-12 * max(1.0, abs(best))


def brute_partition(
    contribs: ContributionGramians, kappa: int, m: Metric, *, guard: int = GUARD
) -> tuple[Partition, float]:
    """Best labeled assignment of states to ``kappa`` blocks by enumeration.

    Assignments are visited in lexicographic order, so ties keep the first.
    """
    n = contribs.n_y
    if kappa**n > guard:
        raise GuardError(f"{kappa}^{n} assignments exceed the guard of {guard}")
    g = GramianSetFunction(contribs, m)
    best, best_labels = -np.inf, None
    for labels in itertools.product(range(kappa), repeat=n):
        parts = [[] for _ in range(kappa)]
        for v, i in enumerate(labels):
            parts[i].append(v)
        value = sum(g(p) for p in parts)
        if best_labels is None or _better(value, best):
            best, best_labels = value, labels
    return Partition.from_labels(best_labels, kappa, "brute-force"), float(best)


def _feasible(partition: Partition, budgets: Sequence[int], total: int | None):
    per_block = [
        [c for k in range(min(r, len(b)) + 1) for c in itertools.combinations(b, k)]
        for b, r in zip(partition.blocks, budgets)
    ]
    for combo in itertools.product(*per_block):
        R = tuple(sorted(v for part in combo for v in part))
        if total is None or len(R) <= total:
            yield R


def brute_placement(
    contribs: ContributionGramians,
    partition: Partition,
    budgets: Sequence[int],
    mode: str,
    m: Metric,
    *,
    total: int | None = None,
    guard: int = GUARD,
) -> tuple[SensorConfig, float]:
    """Best feasible sensor set by enumeration; ties go to the lexicographically smallest."""
    M = placement_matroid(partition, budgets, total)
    count = prod(sum(comb(len(b), k) for k in range(min(r, len(b)) + 1)) for b, r in zip(partition.blocks, budgets))
    if count > guard:
        raise GuardError(f"{count} candidate sensor sets exceed the guard of {guard}")
    f = placement_objective(contribs, partition, mode, m)
    best, best_R = -np.inf, None
    for R in sorted(_feasible(partition, M.capacities, total)):
        value = f(R)
        if best_R is None or _better(value, best):
            best, best_R = value, R
    raw = f.raw(best_R) if mode == "global" else sum(f.inner.raw(p) for p in f.split(best_R))
    config = SensorConfig(best_R, M.capacities, mode, float(best), float(raw), total)
    return config, float(best)


@dataclass(frozen=True)
class Violation:
    """``kind`` is ``submodular`` (witness ``A, B, s``) or ``monotone`` (``A`` subset of ``B``)."""

    kind: str
    A: tuple[int, ...]
    B: tuple[int, ...]
    s: int | None
    amount: float


def _members(mask: int) -> tuple[int, ...]:
    return tuple(i for i in range(mask.bit_length()) if mask >> i & 1)


def _subset_extreme(values: np.ndarray, n: int, sign: float) -> tuple[np.ndarray, np.ndarray]:
    """Per mask, the extreme of ``sign * values`` over its submasks and the smallest submask reaching it."""
    best = sign * values.copy()
    arg = np.arange(values.size)
    masks = np.arange(values.size)
    for i in range(n):
        bit = 1 << i
        sup = masks[(masks & bit) != 0]
        sub = sup ^ bit
        take = (best[sub] < best[sup]) | ((best[sub] == best[sup]) & (arg[sub] < arg[sup]))
        best[sup[take]] = best[sub[take]]
        arg[sup[take]] = arg[sub[take]]
    return sign * best, arg


def check_submodular_monotone(
    f: Callable, n: int, *, slack: float = 1e-9, limit: int | None = None
) -> list[Violation]:
    """Exhaustive diminishing-returns and monotonicity test on ``2^n`` subsets.

    For each ``s`` and each ``B`` not containing ``s``, the smallest gain over
    all ``A`` inside ``B`` is found by a subset-min pass; ``B`` is a violation
    when that gain falls short of the gain at ``B`` by more than ``slack``.
    Witnesses are sorted by ``|B|``, ``B``, ``s``.
    """
    if n > MAX_CHECK:
        raise GuardError(f"exhaustive check limited to n <= {MAX_CHECK}, got {n}")
    size = 1 << n
    values = np.array([f(list(_members(mask))) for mask in range(size)], dtype=float)
    found: list[Violation] = []
    masks = np.arange(size)
    for s in range(n):
        bit = 1 << s
        # gains of s on masks without s, re-indexed on the other n-1 elements
        others = [i for i in range(n) if i != s]
        sub = masks[: 1 << (n - 1)]
        full = np.zeros_like(sub)
        for j, i in enumerate(others):
            full |= ((sub >> j) & 1) << i
        gain = values[full | bit] - values[full]
        low, arg = _subset_extreme(gain, n - 1, 1.0)
        bad = np.flatnonzero(low < gain - slack)
        for k in bad:
            found.append(Violation("submodular", _members(int(full[arg[k]])), _members(int(full[k])), s,
                                   float(gain[k] - low[k])))
    high, arg = _subset_extreme(values, n, -1.0)
    for B in np.flatnonzero(high > values + slack):
        found.append(Violation("monotone", _members(int(arg[B])), _members(int(B)), None, float(high[B] - values[B])))
    found.sort(key=lambda w: (w.kind != "submodular", len(w.B), w.B, -1 if w.s is None else w.s, w.A))
    return found[:limit] if limit is not None else found
