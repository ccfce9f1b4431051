"""Sensor placement over a partition, with global or per-subsystem objectives."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InfeasibleError
from .matroids import PartitionMatroid, partition_matroid
from .maximize import SolverConfig, SolveTrace, solve
from .measures import BlockSumFunction, GramianSetFunction, Metric, SetFunction, measure
from .partition import Partition
from .sysmodel import ContributionGramians, full_gramian

MODES = ("global", "local")


@dataclass(frozen=True)
class SensorConfig:
    selected: tuple[int, ...]
    budgets: tuple[int, ...]
    mode: str
    value: float
    raw_value: float
    total: int | None = None

    def to_dict(self, labels: Sequence[str] | None = None) -> dict:
        out = {
            "selected": list(self.selected),
            "budgets": list(self.budgets),
            "mode": self.mode,
            "value": self.value,
            "value_raw": self.raw_value,
            "total": self.total,
        }
        if labels is not None:
            out["selected_labels"] = [labels[v] for v in self.selected]
        return out


@dataclass(frozen=True)
class BoundDiagnostic:
    """Global measure of the union versus the sum of per-block measures.

    Both sides are unshifted measures.  ``holds`` means equality for trace,
    ``global <= local`` for rank and ``global >= local`` for logdet.
    """

    global_value: float
    local_value: float
    metric: str
    holds: bool
    gap: float

    def to_dict(self) -> dict:
        return {"global": self.global_value, "local": self.local_value, "metric": self.metric,
                "holds": self.holds, "gap": self.gap}


def budgets_from_total(partition: Partition, r: int) -> tuple[int, ...]:
    """Largest-remainder split of ``r`` proportional to block sizes.

    Ties in the remainder go to the lowest block index; each budget is capped
    at its block size, with any leftover going to the largest blocks first.
    """
    sizes = [len(b) for b in partition.blocks]
    n = sum(sizes)
    if r < 0:
        raise InfeasibleError("sensor total must be nonnegative")
    if r > n:
        raise InfeasibleError(f"sensor total {r} exceeds the number of measurable states {n}")
    if r == 0:
        return (0,) * len(sizes)
    base = [min(r * s // n, s) for s in sizes]
    rem = [r * s % n for s in sizes]
    left = r - sum(base)
    for i in sorted(range(len(sizes)), key=lambda i: (-rem[i], i)):
        if left == 0:
            break
        if rem[i] > 0 and base[i] < sizes[i]:
            base[i] += 1
            left -= 1
    for i in sorted(range(len(sizes)), key=lambda i: (-sizes[i], i)):
        while left and base[i] < sizes[i]:
            base[i] += 1
            left -= 1
    return tuple(base)


def placement_matroid(partition: Partition, budgets: Sequence[int], total: int | None = None) -> PartitionMatroid:
    budgets = tuple(int(b) for b in budgets)
    if len(budgets) != partition.kappa:
        raise InfeasibleError(f"{len(budgets)} budgets for {partition.kappa} blocks")
    for i, (b, block) in enumerate(zip(budgets, partition.blocks)):
        if b < 0:
            raise InfeasibleError(f"budget of block {i} is negative")
        if b > len(block):
            raise InfeasibleError(f"budget {b} of block {i} exceeds its size {len(block)}")
    return partition_matroid(partition.blocks, budgets, total=total, n=partition.n)


def placement_objective(contribs: ContributionGramians, partition: Partition, mode: str, m: Metric) -> SetFunction:
    """Set function over V for ``global`` or ``local`` mode."""
    inner = GramianSetFunction(contribs, m)
    if mode == "global":
        return inner
    if mode == "local":
        return BlockSumFunction(inner, partition.labels(), np.arange(partition.n))
    raise ValueError(f"mode must be one of {MODES}")


def solve_placement(
    contribs: ContributionGramians,
    partition: Partition,
    budgets: Sequence[int],
    mode: str = "global",
    m: Metric | None = None,
    solver: str = "greedy",
    cfg: SolverConfig | None = None,
    *,
    total: int | None = None,
) -> tuple[SensorConfig, SolveTrace]:
    """Choose at most ``budgets[i]`` sensors in block ``i`` (and ``total`` overall).

    ``global`` maximizes the measure of the summed Gramian of the selection;
    ``local`` maximizes the sum of per-block measures.
    """
    m = m or Metric()
    cfg = cfg or SolverConfig()
    if contribs.n_y != partition.n:
        raise InfeasibleError(f"partition covers {partition.n} states, system has {contribs.n_y} outputs")
    M = placement_matroid(partition, budgets, total)
    f = placement_objective(contribs, partition, mode, m)
    if solver == "continuous" and cfg.rounding is None:
        cfg = SolverConfig(cfg.steps, cfg.samples, cfg.seed, "pipage", cfg.lazy, cfg.workers)
    S, trace = solve(f, M, cfg, solver)
    R = tuple(sorted(S))
    if isinstance(f, BlockSumFunction):
        raw = sum(f.inner.raw(part) for part in f.split(R))
    else:
        raw = f.raw(R)
    config = SensorConfig(R, M.capacities, mode, float(f(R)), float(raw), total)
    return config, trace


def objective_value(contribs, partition: Partition, R: Iterable[int], mode: str, m: Metric) -> float:
    return float(placement_objective(contribs, partition, mode, m)(R))


def bound_check(contribs: ContributionGramians, partition: Partition, R: Iterable[int], m: Metric) -> BoundDiagnostic:
    """Compare ``measure(W_R)`` against ``sum_i measure(W_{R & S_i})`` (unshifted)."""
    R = set(int(v) for v in R)
    if any(not 0 <= v < contribs.n_y for v in R):
        raise IndexError("sensor index outside the state set")
    glob = measure(full_gramian(contribs, R), m, check=False)
    local = float(sum(measure(full_gramian(contribs, R & set(b)), m, check=False) for b in partition.blocks))
    gap = glob - local
    if m.kind == "trace":
        holds = abs(gap) <= 1e-9 * max(1.0, abs(glob))
    elif m.kind == "rank":
        holds = glob <= local
    else:
        holds = bool(glob >= local)
    return BoundDiagnostic(float(glob), local, m.kind, bool(holds), float(gap))
