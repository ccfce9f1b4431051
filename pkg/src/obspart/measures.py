"""Scalar observability measures and memoized set functions over outputs."""
from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .sysmodel import ContributionGramians, GramianMatrix

METRICS = ("trace", "logdet", "rank")

_EPS = np.finfo(float).eps
_TINY = np.finfo(float).tiny


@dataclass(frozen=True)
class Metric:
    kind: str = "logdet"
    epsilon: float = 1e-10
    rank_rel_tol: float = 1e-9

    def __post_init__(self):
        if self.kind not in METRICS:
            raise ValueError(f"unknown metric {self.kind!r}; expected one of {METRICS}")
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if not 0 < self.rank_rel_tol < 1:
            raise ValueError(f"rank_rel_tol must lie in (0, 1), got {self.rank_rel_tol}")


def _as_array(W) -> np.ndarray:
    if isinstance(W, GramianMatrix):
        W = W.W
    return np.asarray(W, dtype=float)


def validate_psd(W: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Return eigenvalues of ``W`` after checking symmetry and PSD-ness."""
    scale = np.linalg.norm(W)
    if scale > 0 and np.linalg.norm(W - W.T) > tol * scale:
        raise ValueError("matrix is not symmetric within tolerance")
    eigs = np.linalg.eigvalsh(0.5 * (W + W.T))
    top = eigs[-1] if eigs.size else 0.0
    if eigs.size and eigs[0] < -tol * max(top, _TINY):
        raise ValueError(f"matrix is indefinite: smallest eigenvalue {eigs[0]:.3e}")
    return eigs


def _from_eigs(eigs: np.ndarray, m: Metric) -> float:
    n = eigs.shape[-1]
    top = eigs[-1] if n else 0.0
    if m.kind == "rank":
        return float(np.count_nonzero(eigs > m.rank_rel_tol * max(top, _TINY)))
    # eigenvalues under the rounding floor of the largest one are treated as exact zeros
    lam = np.where(eigs > n * _EPS * max(top, 0.0), eigs, 0.0)
    with np.errstate(divide="ignore"):
        return float(np.sum(np.log(lam + m.epsilon)))


def measure(W, m: Metric, *, check: bool = True) -> float:
    """Scalar observability measure of a symmetric PSD Gramian.

    ``trace`` is the diagonal sum, ``logdet`` is ``sum log(lambda_j + eps)``
    and ``rank`` counts eigenvalues above ``rank_rel_tol * lambda_max``.
    With ``eps = 0`` a singular ``W`` has logdet ``-inf``.
    """
    W = _as_array(W)
    eigs = validate_psd(W) if check else None
    if m.kind == "trace":
        return float(np.trace(W))
    if eigs is None:
        eigs = np.linalg.eigvalsh(W)
    return _from_eigs(eigs, m)


def measure_batch(Ws: np.ndarray, m: Metric, *, overwrite: bool = False) -> np.ndarray:
    """Unchecked measure of a stack of matrices, shape ``(k, n, n)``.

    ``overwrite=True`` lets the logdet path shift the diagonal of ``Ws`` in place.
    """
    Ws = np.asarray(Ws, dtype=float)
    if m.kind == "trace":
        return np.trace(Ws, axis1=1, axis2=2)
    if m.kind == "logdet" and m.epsilon > 0:
        shifted = Ws if overwrite else Ws.copy()
        diag = np.einsum("kii->ki", shifted)
        diag += m.epsilon
        try:
            L = np.linalg.cholesky(shifted)
            return 2.0 * np.sum(np.log(np.diagonal(L, axis1=1, axis2=2)), axis=1)
        except np.linalg.LinAlgError:
            diag -= m.epsilon
    eigs = np.linalg.eigvalsh(Ws)
    return np.array([_from_eigs(e, m) for e in eigs])


class SetFunction:
    """Memoized set function over ``{0, ..., n-1}``.

    Values are shifted so that ``f(empty) = 0`` when the unshifted empty-set
    value is finite.  ``evaluations`` counts cache misses only.
    """

    def __init__(self, n: int, evaluator: Callable[[tuple[int, ...]], float], *, normalize: bool = True):
        self.n = int(n)
        self._evaluator = evaluator
        self._cache: dict[tuple[int, ...], float] = {}
        self._lock = threading.Lock()
        self.evaluations = 0
        self.offset = 0.0
        if normalize:
            base = float(evaluator(()))
            self.offset = base if np.isfinite(base) else 0.0

    def key(self, subset: Iterable[int]) -> tuple[int, ...]:
        key = tuple(sorted(set(int(s) for s in subset)))
        if key and (key[0] < 0 or key[-1] >= self.n):
            raise IndexError(f"subset element outside ground set of size {self.n}")
        return key

    def raw(self, subset: Iterable[int]) -> float:
        key = self.key(subset)
        value = self._cache.get(key)
        if value is None:
            value = float(self._evaluator(key))
            with self._lock:
                if key not in self._cache:
                    self._cache[key] = value
                    self.evaluations += 1
                value = self._cache[key]
        return value

    def __call__(self, subset: Iterable[int]) -> float:
        return self.raw(subset) - self.offset

    def marginal(self, subset: Iterable[int], s: int) -> float:
        base = set(subset)
        return self(base | {s}) - self(base - {s})

    def gains(self, subset: Iterable[int]) -> np.ndarray:
        """``f(S + s) - f(S - s)`` for every element ``s``."""
        base = set(subset)
        return np.array([self(base | {s}) - self(base - {s}) for s in range(self.n)])

    def clear_cache(self) -> None:
        with self._lock:
            self._cache.clear()


class GramianSetFunction(SetFunction):
    """``f(R) = measure(sum_{v in R} W(v))`` over the outputs of a system."""

    def __init__(self, contribs: ContributionGramians | np.ndarray, metric: Metric):
        self.contribs = np.asarray(getattr(contribs, "contribs", contribs), dtype=float)
        self.metric = metric
        self._zero = np.zeros(self.contribs.shape[1:])
        super().__init__(self.contribs.shape[0], self._evaluate)

    def gramian(self, key: Iterable[int]) -> np.ndarray:
        key = list(key)
        if not key:
            return self._zero
        return self.contribs[key].sum(axis=0)

    def _evaluate(self, key: tuple[int, ...]) -> float:
        return measure(self.gramian(key), self.metric, check=False)

    def gains(self, subset: Iterable[int]) -> np.ndarray:
        key = self.key(subset)
        inside = np.zeros(self.n, dtype=bool)
        inside[list(key)] = True
        base = self.gramian(key)
        sign = np.where(inside, -1.0, 1.0)
        mats = np.empty((self.n + 1,) + base.shape)
        mats[0] = base
        np.multiply(sign[:, None, None], self.contribs, out=mats[1:])
        mats[1:] += base
        vals = measure_batch(mats, self.metric, overwrite=True)
        with self._lock:
            self.evaluations += self.n + 1
        return np.where(inside, vals[0] - vals[1:], vals[1:] - vals[0])


class BlockSumFunction(SetFunction):
    """``f(S) = sum_b g({state(e) : e in S, block(e) = b})`` for a shared ``g``.

    Each element carries a (block, state) label.  Block terms go through the
    memo of ``inner``, so a marginal query touches a single block.
    """

    def __init__(self, inner: GramianSetFunction, element_block, element_state):
        self.inner = inner
        self.element_block = np.asarray(element_block, dtype=int)
        self.element_state = np.asarray(element_state, dtype=int)
        if self.element_block.shape != self.element_state.shape:
            raise ValueError("element_block and element_state must have equal length")
        self.n_blocks = int(self.element_block.max()) + 1 if self.element_block.size else 0
        self._element_contribs = inner.contribs[self.element_state]
        super().__init__(self.element_block.size, self._evaluate, normalize=False)

    @property
    def evaluations(self) -> int:
        return self.inner.evaluations

    @evaluations.setter
    def evaluations(self, value) -> None:
        pass

    def split(self, key: Iterable[int]) -> list[list[int]]:
        parts: list[list[int]] = [[] for _ in range(self.n_blocks)]
        for e in key:
            parts[self.element_block[e]].append(int(self.element_state[e]))
        return parts

    def _evaluate(self, key: tuple[int, ...]) -> float:
        return float(sum(self.inner(part) for part in self.split(key)))

    def raw(self, subset: Iterable[int]) -> float:
        # block terms are memoized in ``inner``; no second cache here
        return self._evaluate(self.key(subset))

    def block_values(self, subset: Iterable[int]) -> list[float]:
        return [self.inner(part) for part in self.split(self.key(subset))]

    def marginal(self, subset: Iterable[int], s: int) -> float:
        base = set(subset)
        b = self.element_block[s]
        part = {int(self.element_state[e]) for e in base if self.element_block[e] == b and e != s}
        v = int(self.element_state[s])
        return self.inner(part | {v}) - self.inner(part)

    def gains(self, subset: Iterable[int]) -> np.ndarray:
        key = self.key(subset)
        parts = self.split(key)
        bases = np.stack([self.inner.gramian(p) for p in parts])
        inside = np.zeros(self.n, dtype=bool)
        inside[list(key)] = True
        sign = np.where(inside, -1.0, 1.0)
        mats = np.multiply(sign[:, None, None], self._element_contribs)
        mats += bases[self.element_block]
        metric = self.inner.metric
        base_vals = measure_batch(bases, metric)
        vals = measure_batch(mats, metric, overwrite=True)
        with self.inner._lock:
            self.inner.evaluations += self.n + len(parts)
        ref = base_vals[self.element_block]
        return np.where(inside, ref - vals, vals - ref)


def make_set_function(contribs: ContributionGramians, m: Metric) -> GramianSetFunction:
    """Normalized, memoized ``f(R) = measure(sum_{v in R} W(v), m)``."""
    return GramianSetFunction(contribs, m)
