"""Ground sets, partition matroids and max-weight independent sets."""
from __future__ import annotations

import abc
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable, Sequence

import numpy as np

from .errors import InfeasibleError


@dataclass(frozen=True)
class GroundSet:
    """Element descriptors, either plain indices or ``(subsystem, state)`` pairs."""

    descriptors: tuple[Hashable, ...]
    _lookup: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        lookup = {d: i for i, d in enumerate(self.descriptors)}
        if len(lookup) != len(self.descriptors):
            raise ValueError("ground set descriptors must be unique")
        object.__setattr__(self, "_lookup", lookup)

    @classmethod
    def plain(cls, n: int) -> "GroundSet":
        return cls(tuple(range(n)))

    @classmethod
    def extended(cls, n_y: int, kappa: int) -> "GroundSet":
        # element index e = i * n_y + v
        return cls(tuple((i, v) for i in range(kappa) for v in range(n_y)))

    def __len__(self) -> int:
        return len(self.descriptors)

    def index(self, descriptor: Hashable) -> int:
        return self._lookup[descriptor]


class Matroid(abc.ABC):
    """Independence oracle over ``ground``; subclasses supply ``can_add``."""

    ground: GroundSet

    @property
    def size(self) -> int:
        return len(self.ground)

    @abc.abstractmethod
    def is_independent(self, subset: Iterable[int]) -> bool: ...

    def can_add(self, subset: Sequence[int], e: int) -> bool:
        return e not in subset and self.is_independent(list(subset) + [e])


@dataclass(frozen=True)
class PartitionMatroid(Matroid):
    """At most ``capacities[j]`` elements from ``blocks[j]``.

    ``total`` optionally caps the overall cardinality as well (a two-level
    laminar matroid); a single block with no total is the uniform matroid.
    """

    ground: GroundSet
    blocks: tuple[tuple[int, ...], ...]
    capacities: tuple[int, ...]
    total: int | None = None
    block_of: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        blocks = tuple(tuple(int(e) for e in b) for b in self.blocks)
        caps = tuple(int(c) for c in self.capacities)
        if len(caps) != len(blocks):
            raise ValueError(f"{len(caps)} capacities for {len(blocks)} blocks")
        if any(c < 0 for c in caps):
            raise ValueError("capacities must be nonnegative")
        if self.total is not None and self.total < 0:
            raise ValueError("total capacity must be nonnegative")
        n = len(self.ground)
        block_of = np.full(n, -1, dtype=int)
        for j, b in enumerate(blocks):
            for e in b:
                if not 0 <= e < n:
                    raise ValueError(f"block element {e} outside ground set of size {n}")
                if block_of[e] >= 0:
                    raise ValueError(f"element {e} appears in more than one block")
                block_of[e] = j
        if np.any(block_of < 0):
            raise ValueError("blocks must cover the ground set")
        block_of.setflags(write=False)
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "capacities", caps)
        object.__setattr__(self, "block_of", block_of)

    def counts(self, subset: Iterable[int]) -> np.ndarray:
        idx = np.fromiter((int(e) for e in subset), dtype=int)
        return np.bincount(self.block_of[idx], minlength=len(self.blocks))

    def is_independent(self, subset: Iterable[int]) -> bool:
        items = list(subset)
        if len(set(items)) != len(items):
            return False
        if any(not 0 <= e < self.size for e in items):
            return False
        if self.total is not None and len(items) > self.total:
            return False
        return bool(np.all(self.counts(items) <= np.asarray(self.capacities)))

    def can_add(self, subset: Sequence[int], e: int) -> bool:
        if e in subset:
            return False
        if self.total is not None and len(subset) >= self.total:
            return False
        j = self.block_of[e]
        used = sum(1 for s in subset if self.block_of[s] == j)
        return used < self.capacities[j]

    @property
    def rank(self) -> int:
        r = sum(min(c, len(b)) for b, c in zip(self.blocks, self.capacities))
        return r if self.total is None else min(r, self.total)


def uniform_matroid(n: int, k: int) -> PartitionMatroid:
    return PartitionMatroid(GroundSet.plain(n), (tuple(range(n)),), (k,))


def partition_matroid(
    blocks: Sequence[Sequence[int]],
    capacities: Sequence[int],
    *,
    total: int | None = None,
    n: int | None = None,
) -> PartitionMatroid:
    size = n if n is not None else sum(len(b) for b in blocks)
    return PartitionMatroid(GroundSet.plain(size), tuple(map(tuple, blocks)), tuple(capacities), total)


def build_extended_matroid(n_y: int, kappa: int) -> PartitionMatroid:
    """Ground ``C x V`` with one capacity-1 block per state (its kappa copies)."""
    if n_y < 1 or kappa < 1:
        raise ValueError("n_y and kappa must be at least 1")
    ground = GroundSet.extended(n_y, kappa)
    blocks = tuple(tuple(i * n_y + v for i in range(kappa)) for v in range(n_y))
    return PartitionMatroid(ground, blocks, (1,) * n_y)


def is_independent(M: Matroid, subset: Iterable[int]) -> bool:
    return M.is_independent(subset)


def _tol(w: float, rel: float) -> float:
    return rel * max(1.0, abs(w))


def max_weight_independent(
    M: Matroid,
    weights,
    *,
    tie_key: Callable[[int, list[int]], tuple] | None = None,
    rel_tol: float = 1e-12,
) -> frozenset[int]:
    """Greedy max-weight independent set over elements with positive weight.

    Elements are scanned in decreasing weight.  Weights within ``rel_tol`` of
    the head of a run count as tied; ties go to the lowest ``tie_key`` and then
    to the lowest element index.  Exact for every matroid.
    """
    w = np.asarray(weights, dtype=float)
    if w.shape != (M.size,):
        raise ValueError(f"expected {M.size} weights, got shape {w.shape}")
    order = sorted((e for e in range(M.size) if w[e] > 0), key=lambda e: (-w[e], e))
    chosen: list[int] = []
    i = 0
    while i < len(order):
        head = w[order[i]]
        j = i + 1
        while j < len(order) and head - w[order[j]] <= _tol(head, rel_tol):
            j += 1
        group = order[i:j]
        if tie_key is None:
            for e in group:
                if M.can_add(chosen, e):
                    chosen.append(e)
        else:
            remaining = list(group)
            while remaining:
                feasible = [e for e in remaining if M.can_add(chosen, e)]
                if not feasible:
                    break
                e = min(feasible, key=lambda e: (tie_key(e, chosen), e))
                chosen.append(e)
                remaining.remove(e)
        i = j
    return frozenset(chosen)


def require_independent(M: Matroid, subset: Iterable[int]) -> None:
    if not M.is_independent(subset):
        raise InfeasibleError("set is not independent in the matroid")
