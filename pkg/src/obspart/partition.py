"""Partitioning the measurable states into kappa observable subsystems.

The assignment problem is posed on the extended ground set ``C x V``
(element ``e = i * n_y + v`` puts state ``v`` into subsystem ``i``) under a
partition matroid with one capacity-1 block per state, and maximizes the sum
of per-subsystem observability measures.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InfeasibleError, ModelError
from .matroids import build_extended_matroid
from .maximize import SolverConfig, SolveTrace, solve
from .measures import BlockSumFunction, GramianSetFunction, Metric
from .sysmodel import ContributionGramians, LtiSystem, contribution_gramians

PROVENANCE = ("p2-solver", "spectral", "manual", "brute-force")


@dataclass(frozen=True)
class Partition:
    """``kappa`` disjoint blocks whose union is ``{0, ..., n-1}``; blocks may be empty."""

    kappa: int
    blocks: tuple[tuple[int, ...], ...]
    provenance: str = "manual"

    def __post_init__(self):
        blocks = tuple(tuple(sorted(int(v) for v in b)) for b in self.blocks)
        if self.kappa < 1:
            raise ValueError("kappa must be at least 1")
        if len(blocks) != self.kappa:
            raise ValueError(f"expected {self.kappa} blocks, got {len(blocks)}")
        members = [v for b in blocks for v in b]
        if len(set(members)) != len(members):
            raise ValueError("partition blocks overlap")
        if sorted(members) != list(range(len(members))):
            raise ValueError("partition blocks must cover 0..n-1 exactly")
        if self.provenance not in PROVENANCE:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        object.__setattr__(self, "blocks", blocks)

    @property
    def n(self) -> int:
        return sum(len(b) for b in self.blocks)

    def labels(self) -> np.ndarray:
        out = np.empty(self.n, dtype=int)
        for i, b in enumerate(self.blocks):
            out[list(b)] = i
        return out

    @classmethod
    def from_labels(cls, labels: Sequence[int], kappa: int, provenance: str = "manual") -> "Partition":
        blocks: list[list[int]] = [[] for _ in range(kappa)]
        for v, i in enumerate(labels):
            if not 0 <= int(i) < kappa:
                raise ValueError(f"label {i} outside [0, {kappa})")
            blocks[int(i)].append(v)
        return cls(kappa, tuple(map(tuple, blocks)), provenance)

    @classmethod
    def single(cls, n: int) -> "Partition":
        return cls(1, (tuple(range(n)),))

    def to_dict(self, labels: Sequence[str] | None = None) -> dict:
        out = {"kappa": self.kappa, "blocks": [list(b) for b in self.blocks], "provenance": self.provenance}
        if labels is not None:
            out["block_labels"] = [[labels[v] for v in b] for b in self.blocks]
        return out


def partition_from_dict(data: dict, n: int | None = None) -> Partition:
    """Accept ``{"blocks": [[...]]}`` or a report carrying ``outputs.partition``."""
    if isinstance(data, dict) and "blocks" not in data:
        data = data.get("outputs", {}).get("partition", data)
    if not isinstance(data, dict) or "blocks" not in data:
        raise ModelError("partition file needs a 'blocks' field", field="blocks")
    blocks = data["blocks"]
    if not isinstance(blocks, list) or not all(isinstance(b, list) for b in blocks) or not blocks:
        raise ModelError("'blocks' must be a non-empty list of index lists", field="blocks")
    try:
        p = Partition(len(blocks), tuple(map(tuple, blocks)), data.get("provenance", "manual"))
    except (TypeError, ValueError) as exc:
        raise ModelError(f"invalid partition: {exc}", field="blocks") from exc
    if n is not None and p.n != n:
        raise ModelError(f"partition covers {p.n} states, system has {n}", field="blocks")
    return p


def load_partition(path: str | Path, n: int | None = None) -> Partition:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelError(f"cannot read partition file {path}: {exc}") from exc
    return partition_from_dict(data, n)


def encode_p1(partition: Partition) -> frozenset[int]:
    """Partition -> extended-ground-set selection ``{i * n + v : v in S_i}``."""
    n = partition.n
    return frozenset(i * n + v for i, b in enumerate(partition.blocks) for v in b)


def decode_p2(S: Iterable[int], n_y: int, kappa: int, provenance: str = "manual") -> Partition:
    """Inverse of :func:`encode_p1`; every state must be taken exactly once."""
    labels = np.full(n_y, -1, dtype=int)
    for e in S:
        e = int(e)
        if not 0 <= e < n_y * kappa:
            raise InfeasibleError(f"element {e} outside the extended ground set of size {n_y * kappa}")
        i, v = divmod(e, n_y)
        if labels[v] >= 0:
            raise InfeasibleError(f"state {v} assigned to subsystems {labels[v]} and {i}")
        labels[v] = i
    missing = np.flatnonzero(labels < 0)
    if missing.size:
        raise InfeasibleError(f"states {missing.tolist()} are not assigned to any subsystem")
    return Partition.from_labels(labels, kappa, provenance)


def build_p2_objective(contribs: ContributionGramians, kappa: int, m: Metric) -> BlockSumFunction:
    """``f(S) = sum_i g({v : (i, v) in S})`` with ``g`` the normalized measure on V."""
    inner = GramianSetFunction(contribs, m)
    n_y = inner.n
    e = np.arange(kappa * n_y)
    return BlockSumFunction(inner, e // n_y, e % n_y)


@dataclass
class PartitionReport:
    block_values: list[float]
    block_raw: list[float]
    total: float
    modularity: float | None = None
    trace: SolveTrace = field(default_factory=SolveTrace)
    wall: float = 0.0
    solver: str = "continuous"
    completed: list[int] = field(default_factory=list)

    def to_dict(self, *, timing: bool = False) -> dict:
        out = {
            "block_values": self.block_values,
            "block_values_raw": self.block_raw,
            "total": self.total,
            "total_raw": float(sum(self.block_raw)),
            "modularity": self.modularity,
            "solver": self.solver,
            "completed_states": self.completed,
            "trace": self.trace.to_dict(timing=timing),
        }
        if timing:
            out["wall"] = self.wall
        return out


def _tol(x: float) -> float:
    return 1e-12 * max(1.0, abs(x))


def _complete(f: BlockSumFunction, chosen: set[int], n_y: int, kappa: int) -> list[int]:
    """Give each unassigned state to its best subsystem (ties: emptiest, then lowest)."""
    assigned = {e % n_y for e in chosen}
    added = []
    for v in range(n_y):
        if v in assigned:
            continue
        sizes = np.bincount([e // n_y for e in chosen], minlength=kappa)
        gains = [f.marginal(chosen, i * n_y + v) for i in range(kappa)]
        best = max(gains)
        tied = [i for i in range(kappa) if gains[i] >= best - _tol(best)]
        i = min(tied, key=lambda i: (sizes[i], i))
        chosen.add(i * n_y + v)
        added.append(v)
    return added


def solve_partition(
    system: LtiSystem | ContributionGramians,
    kappa: int,
    m: Metric | None = None,
    cfg: SolverConfig | None = None,
    solver: str = "continuous",
    *,
    horizon: int | str = 1000,
    graph=None,
) -> tuple[Partition, PartitionReport]:
    """Split the states into ``kappa`` subsystems maximizing the summed measure.

    Runs greedy or continuous greedy on the extended ground set, rounds, then
    completes the cover.  ``graph`` (or the system's adjacency) adds the
    modularity of the result to the report.
    """
    if kappa < 1:
        raise ValueError("kappa must be at least 1")
    m = m or Metric()
    cfg = cfg or SolverConfig()
    started = time.perf_counter()
    contribs = contribution_gramians(system, horizon) if isinstance(system, LtiSystem) else system
    n_y = contribs.n_y
    f = build_p2_objective(contribs, kappa, m)
    M = build_extended_matroid(n_y, kappa)

    def load(e, chosen):
        i = e // n_y
        return (sum(1 for c in chosen if c // n_y == i),)

    def fractional_load(e, chosen, x):
        # ties keep the direction of earlier steps, then prefer the emptiest subsystem
        i = e // n_y
        return (-float(x[e]), float(x[i * n_y:(i + 1) * n_y].sum()) + sum(1 for c in chosen if c // n_y == i))

    S, trace = solve(f, M, cfg, solver, tie_key=load, continuous_tie_key=fractional_load)
    chosen = set(S)
    added = _complete(f, chosen, n_y, kappa)
    part = decode_p2(chosen, n_y, kappa, provenance="p2-solver")

    values = [f.inner(b) for b in part.blocks]
    raw = [f.inner.raw(b) for b in part.blocks]
    q = None
    if graph is None and isinstance(system, LtiSystem) and system.adjacency is not None:
        from .graphkit import InteractionGraph

        graph = InteractionGraph(system.adjacency)
    if graph is not None and graph.m > 0:
        from .graphkit import modularity

        q = modularity(graph, part)
    report = PartitionReport(
        block_values=[float(v) for v in values],
        block_raw=[float(v) for v in raw],
        total=float(sum(values)),
        modularity=q,
        trace=trace,
        wall=time.perf_counter() - started,
        solver=solver,
        completed=added,
    )
    return part, report
