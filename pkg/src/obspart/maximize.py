"""Submodular maximization under matroid constraints.

Simple and lazy greedy, sampled multilinear extension and gradient,
continuous greedy, and randomized / pipage rounding.  All randomness is
derived from an integer master seed through ``numpy.random.SeedSequence``
spawn keys, so worker count never changes a result.
"""
from __future__ import annotations

import heapq
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import InfeasibleError
from .matroids import Matroid, PartitionMatroid, max_weight_independent
from .measures import SetFunction

log = logging.getLogger(__name__)

ROUNDING = ("randomized", "pipage")

# stream tags for derive_seed
_GRADIENT, _ROUNDING, _PIPAGE = 0, 1, 2

_SNAP = 1e-12


def derive_seed(seed: int, *keys: int) -> int:
    """Independent 63-bit seed for the stream ``(seed, *keys)``."""
    ss = np.random.SeedSequence(int(seed) & ((1 << 64) - 1), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def sample_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed) & ((1 << 64) - 1), spawn_key=(int(index),)))


def parallel_map(fn, items, workers: int = 1) -> list:
    items = list(items)
    if workers <= 1 or len(items) < 2:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class SolverConfig:
    steps: int = 10
    samples: int = 100
    seed: int = 0
    rounding: str | None = None  # None picks randomized for capacity-1 matroids, else pipage
    lazy: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if self.rounding is not None and self.rounding not in ROUNDING:
            raise ValueError(f"rounding must be one of {ROUNDING}")

    def to_dict(self) -> dict:
        return {"steps": self.steps, "samples": self.samples, "seed": self.seed,
                "rounding": self.rounding, "lazy": self.lazy}


@dataclass
class SolveTrace:
    objective: list[float] = field(default_factory=list)
    gains: list[float] = field(default_factory=list)
    wall: list[float] = field(default_factory=list)
    evaluations: list[int] = field(default_factory=list)

    def record(self, objective: float, gain: float, started: float, evaluations: int) -> None:
        self.objective.append(float(objective))
        self.gains.append(float(gain))
        self.wall.append(time.perf_counter() - started)
        self.evaluations.append(int(evaluations))

    def __len__(self) -> int:
        return len(self.objective)

    def to_dict(self, *, timing: bool = False) -> dict:
        out = {"objective": self.objective, "gains": self.gains, "evaluations": self.evaluations}
        if timing:
            out["wall"] = self.wall
        return out


@dataclass(frozen=True)
class FractionalPoint:
    x: np.ndarray
    steps: int = 0

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        if np.any(x < 0) or np.any(x > 1):
            raise ValueError("fractional point coordinates must lie in [0, 1]")
        x.setflags(write=False)
        object.__setattr__(self, "x", x)

    def check(self, M: PartitionMatroid, tol: float = 1e-9) -> bool:
        sums = np.array([self.x[list(b)].sum() if b else 0.0 for b in M.blocks])
        ok = bool(np.all(sums <= np.asarray(M.capacities) + tol))
        if M.total is not None:
            ok = ok and self.x.sum() <= M.total + tol
        return ok

    def support(self) -> frozenset[int]:
        return frozenset(int(e) for e in np.flatnonzero(self.x >= 1 - _SNAP))


def _rel(best: float, rel_tol: float) -> float:
    return rel_tol * max(1.0, abs(best))


def greedy(
    f: SetFunction,
    M: Matroid,
    lazy: bool = False,
    *,
    tie_key: Callable[[int, list[int]], tuple] | None = None,
    rel_tol: float = 1e-12,
) -> tuple[frozenset[int], SolveTrace]:
    """Add the feasible element of largest marginal gain until none is positive.

    Ties (within ``rel_tol``) go to the smallest ``tie_key(e, S)``, then the
    lowest index.  ``lazy=True`` keeps stale gains as upper bounds in a heap
    and refreshes only candidates that could still tie the best; for
    submodular ``f`` the output equals the eager one.
    """
    started = time.perf_counter()
    trace = SolveTrace()
    chosen: list[int] = []
    key = (lambda e, S: (tie_key(e, S), e)) if tie_key else (lambda e, S: (e,))

    def finish_round(fresh: dict[int, float]) -> int | None:
        if not fresh:
            return None
        best = max(fresh.values())
        if best <= 0:
            return None
        if min(fresh.values()) < -1e-9:
            log.debug("negative marginal gain %.3e; objective may not be monotone", min(fresh.values()))
        tied = [e for e, g in fresh.items() if g >= best - _rel(best, rel_tol)]
        return min(tied, key=lambda e: key(e, chosen))

    if not lazy:
        while True:
            fresh = {e: f.marginal(chosen, e) for e in range(M.size) if M.can_add(chosen, e)}
            pick = finish_round(fresh)
            if pick is None:
                break
            chosen.append(pick)
            trace.record(f(chosen), fresh[pick], started, f.evaluations)
        return frozenset(chosen), trace

    heap = [(-f.marginal([], e), e) for e in range(M.size)]
    heapq.heapify(heap)
    while True:
        fresh: dict[int, float] = {}
        best = -np.inf
        while heap:
            neg, e = heap[0]
            if not M.can_add(chosen, e):
                heapq.heappop(heap)  # partition matroids never re-admit a blocked element
                continue
            if fresh and -neg < best - _rel(best, rel_tol):
                break
            heapq.heappop(heap)
            g = f.marginal(chosen, e)
            fresh[e] = g
            best = max(best, g)
        pick = finish_round(fresh)
        if pick is None:
            break
        chosen.append(pick)
        trace.record(f(chosen), fresh[pick], started, f.evaluations)
        for e, g in fresh.items():
            if e != pick:
                heapq.heappush(heap, (-g, e))
    return frozenset(chosen), trace


def _draw(x: np.ndarray, seed: int, j: int) -> np.ndarray:
    u = sample_rng(seed, j).random(x.size)
    return np.flatnonzero(u < x)


def multilinear_estimate(
    f: SetFunction,
    x,
    samples: int,
    seed: int,
    *,
    workers: int = 1,
    return_std: bool = False,
):
    """Monte Carlo estimate of ``F(x) = E[f(S_x)]``.

    Sample ``j`` uses the stream ``(seed, j)``.  With ``return_std`` the
    standard error ``std / sqrt(samples)`` is returned as well.
    """
    x = np.asarray(getattr(x, "x", x), dtype=float)
    vals = np.array(parallel_map(lambda j: f(_draw(x, seed, j)), range(samples), workers))
    mean = float(vals.mean())
    if not return_std:
        return mean
    se = float(vals.std(ddof=1) / np.sqrt(samples)) if samples > 1 else 0.0
    return mean, se


def _gradient_samples(f, x, samples, seed, workers):
    def one(j):
        S = _draw(x, seed, j)
        return f(S), f.gains(S)

    out = parallel_map(one, range(samples), workers)
    vals = np.array([v for v, _ in out])
    grads = np.stack([g for _, g in out])
    return vals, grads


def gradient_estimate(
    f: SetFunction,
    x,
    samples: int,
    seed: int,
    *,
    workers: int = 1,
    return_std: bool = False,
):
    """Sampled partials ``E[f(S_x + s) - f(S_x - s)]`` for every ``s``.

    One random set per sample is shared by all coordinates.
    """
    x = np.asarray(getattr(x, "x", x), dtype=float)
    _, grads = _gradient_samples(f, x, samples, seed, workers)
    mean = grads.mean(axis=0)
    if not return_std:
        return mean
    se = grads.std(axis=0, ddof=1) / np.sqrt(samples) if samples > 1 else np.zeros_like(mean)
    return mean, se


def continuous_greedy(
    f: SetFunction,
    M: PartitionMatroid,
    cfg: SolverConfig,
    *,
    tie_key: Callable[[int, list[int], np.ndarray], tuple] | None = None,
) -> tuple[FractionalPoint, SolveTrace]:
    """Continuous greedy over the matroid polytope with step ``1/T``.

    Each step estimates the gradient at ``x``, picks the max-weight
    independent set for the (clipped at zero) gradient and moves ``x`` by
    ``1/T`` along its indicator.
    """
    started = time.perf_counter()
    trace = SolveTrace()
    x = np.zeros(M.size)
    for t in range(cfg.steps):
        vals, grads = _gradient_samples(f, x, cfg.samples, derive_seed(cfg.seed, _GRADIENT, t), cfg.workers)
        w = np.maximum(grads.mean(axis=0), 0.0)
        key = None
        if tie_key is not None:
            key = lambda e, chosen, _x=x.copy(): tie_key(e, chosen, _x)
        direction = max_weight_independent(M, w, tie_key=key)
        idx = sorted(direction)
        x[idx] = np.minimum(x[idx] + 1.0 / cfg.steps, 1.0)
        x[np.abs(x - np.round(x)) < _SNAP] = np.round(x[np.abs(x - np.round(x)) < _SNAP])
        trace.record(vals.mean(), w[idx].sum(), started, f.evaluations)
    return FractionalPoint(x, cfg.steps), trace


def _resolve_rounding(M: PartitionMatroid, method: str | None) -> str:
    if method is not None:
        return method
    unit = all(c <= 1 for c in M.capacities) and M.total is None
    return "randomized" if unit else "pipage"


def _randomized(x: np.ndarray, M: PartitionMatroid, seed: int) -> frozenset[int]:
    if M.total is not None or any(c > 1 for c in M.capacities):
        raise InfeasibleError("randomized rounding needs a partition matroid with every capacity <= 1")
    rng = np.random.default_rng(derive_seed(seed, _ROUNDING))
    chosen = []
    for block, cap in zip(M.blocks, M.capacities):
        u = rng.random()
        if cap == 0 or not block:
            continue
        p = x[list(block)]
        total = p.sum()
        if total > 1:
            p = p / total
        hit = np.flatnonzero(u < np.cumsum(p))
        if hit.size:
            chosen.append(block[hit[0]])
    return frozenset(chosen)


class _Conditional:
    """Estimates of ``E[f(R + fixed)]`` with ``R`` drawn from x off ``free``."""

    def __init__(self, f, x, free, samples, seed):
        rest = np.array(x, dtype=float)
        rest[list(free)] = 0.0
        fractional = np.any((rest > _SNAP) & (rest < 1 - _SNAP))
        n = samples if fractional else 1
        self.f = f
        self.sets = [set(_draw(rest, seed, j).tolist()) for j in range(n)]

    def __call__(self, extra: Iterable[int]) -> float:
        extra = set(extra)
        return float(np.mean([self.f(R | extra) for R in self.sets]))


def _pipage(x: np.ndarray, M: PartitionMatroid, f: SetFunction, samples: int, seed: int) -> frozenset[int]:
    x = np.array(x, dtype=float)
    step = 0

    def fractional():
        return [e for e in range(x.size) if _SNAP < x[e] < 1 - _SNAP]

    def snap():
        x[x < _SNAP] = 0.0
        x[x > 1 - _SNAP] = 1.0

    snap()
    while True:
        frac = fractional()
        if not frac:
            break
        pair = None
        frac_set = set(frac)
        for block in M.blocks:
            members = sorted((e for e in block if e in frac_set), key=lambda e: (-x[e], e))
            if len(members) >= 2:
                pair = members[:2]
                break
        if pair is None and M.total is not None and len(frac) >= 2:
            pair = sorted(frac, key=lambda e: (-x[e], e))[:2]
        cond = _Conditional(f, x, pair or frac[:1], samples, derive_seed(seed, _PIPAGE, step))
        step += 1
        if pair is not None:
            a, b = pair
            E = {(i, j): cond([e for e, on in ((a, i), (b, j)) if on]) for i in (0, 1) for j in (0, 1)}

            def value(ya, yb):
                return sum(
                    (ya if i else 1 - ya) * (yb if j else 1 - yb) * E[(i, j)] for i in (0, 1) for j in (0, 1)
                )

            d_up = min(1 - x[a], x[b])
            d_dn = min(x[a], 1 - x[b])
            if value(x[a] + d_up, x[b] - d_up) >= value(x[a] - d_dn, x[b] + d_dn):
                x[a] += d_up
                x[b] -= d_up
            else:
                x[a] -= d_dn
                x[b] += d_dn
        else:
            s = frac[0]
            support = [e for e in range(x.size) if x[e] >= 1 - _SNAP]
            up = M.can_add(support, s) and cond([s]) >= cond([])
            x[s] = 1.0 if up else 0.0
        snap()
    return frozenset(int(e) for e in np.flatnonzero(x >= 1 - _SNAP))


def round_fractional(
    x,
    M: PartitionMatroid,
    method: str | None = None,
    f: SetFunction | None = None,
    samples: int = 100,
    seed: int = 0,
) -> frozenset[int]:
    """Turn a fractional point into an independent set.

    ``randomized`` draws at most one element per capacity-1 block with
    probability equal to its coordinate.  ``pipage`` moves mass between two
    fractional coordinates of a block toward the endpoint with the larger
    estimated extension value (the other coordinates share sampled sets)
    until every coordinate is integral.
    """
    x = np.asarray(getattr(x, "x", x), dtype=float)
    method = _resolve_rounding(M, method)
    if method == "randomized":
        return _randomized(x, M, seed)
    if method == "pipage":
        if f is None:
            raise ValueError("pipage rounding needs the set function")
        return _pipage(x, M, f, samples, seed)
    raise ValueError(f"unknown rounding method {method!r}")


def solve(
    f: SetFunction,
    M: PartitionMatroid,
    cfg: SolverConfig,
    solver: str = "greedy",
    *,
    tie_key=None,
    continuous_tie_key=None,
) -> tuple[frozenset[int], SolveTrace]:
    """Run ``greedy`` or ``continuous`` (followed by rounding) on ``f`` over ``M``."""
    if solver == "greedy":
        return greedy(f, M, cfg.lazy, tie_key=tie_key)
    if solver == "continuous":
        point, trace = continuous_greedy(f, M, cfg, tie_key=continuous_tie_key)
        chosen = round_fractional(point, M, cfg.rounding, f, cfg.samples, cfg.seed)
        return chosen, trace
    raise ValueError(f"unknown solver {solver!r}; expected 'greedy' or 'continuous'")


def feasible_sets(M: PartitionMatroid, sizes: Sequence[int] | None = None):
    """Every independent set of ``M`` (small instances only)."""
    from itertools import combinations

    per_block = []
    for block, cap in zip(M.blocks, M.capacities):
        opts = [c for k in range(min(cap, len(block)) + 1) for c in combinations(block, k)]
        per_block.append(opts)
    from itertools import product

    for combo in product(*per_block):
        S = [e for part in combo for e in part]
        if M.total is None or len(S) <= M.total:
            yield frozenset(S)
