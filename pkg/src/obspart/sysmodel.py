"""Discrete-time LTI model and observability Gramians.

Every set function in the package is built from per-output contribution
Gramians ``W(v) = sum_k (A^k)^T c_v^T c_v A^k``; the Gramian of any output
selection is the plain sum of those contributions.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import ConvergenceError, InstabilityError, ModelError

INFINITE = "infinite"

# Rows per chunk in the forward recursion; bounds memory at large horizons.
_CHUNK = 256


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


def _symmetrize(W: np.ndarray) -> np.ndarray:
    return 0.5 * (W + np.swapaxes(W, -1, -2))


@dataclass(frozen=True)
class LtiSystem:
    """State matrix ``A`` (n_x by n_x) and output matrix ``C`` (n_y by n_x)."""

    A: np.ndarray
    C: np.ndarray
    state_labels: tuple[str, ...] = ()
    adjacency: np.ndarray | None = None
    reactions: tuple[tuple[int, ...], ...] | None = None
    name: str | None = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ModelError(f"A must be square, got shape {A.shape}", field="A")
        n_x = A.shape[0]
        if C.ndim != 2 or C.shape[1] != n_x:
            raise ModelError(
                f"C must have {n_x} columns (shape (n_y, {n_x})), got shape {C.shape}",
                field="C",
            )
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(C))):
            raise ModelError("A and C must be finite", field="A" if not np.all(np.isfinite(A)) else "C")
        n_y = C.shape[0]
        labels = tuple(self.state_labels) if self.state_labels else tuple(f"x{i}" for i in range(n_y))
        if len(labels) != n_y:
            raise ModelError(f"state_labels must have length n_y={n_y}, got {len(labels)}", field="state_labels")
        adj = None
        if self.adjacency is not None:
            adj = np.asarray(self.adjacency, dtype=float)
            if adj.shape != (n_x, n_x):
                raise ModelError(f"adjacency must have shape ({n_x}, {n_x}), got {adj.shape}", field="adjacency")
            if not np.array_equal(adj, adj.T):
                raise ModelError("adjacency must be symmetric", field="adjacency")
            if np.any(np.diag(adj) != 0):
                raise ModelError("adjacency must have a zero diagonal", field="adjacency")
            if not np.all((adj == 0) | (adj == 1)):
                raise ModelError("adjacency entries must be 0 or 1", field="adjacency")
            adj = _frozen(adj)
        reactions = None
        if self.reactions is not None:
            reactions = tuple(tuple(int(i) for i in r) for r in self.reactions)
            for r in reactions:
                for i in r:
                    if not 0 <= i < n_x:
                        raise ModelError(f"reaction participant {i} outside [0, {n_x})", field="reactions")
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "C", _frozen(C))
        object.__setattr__(self, "state_labels", labels)
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "reactions", reactions)

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_y(self) -> int:
        return self.C.shape[0]

    @property
    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.A)))) if self.n_x else 0.0

    def to_dict(self) -> dict:
        out = {"A": self.A.tolist(), "C": self.C.tolist(), "state_labels": list(self.state_labels)}
        if self.name is not None:
            out["name"] = self.name
        if self.adjacency is not None:
            out["adjacency"] = self.adjacency.astype(int).tolist()
        if self.reactions is not None:
            out["reactions"] = [list(r) for r in self.reactions]
        return out


def _matrix(data, field_name: str) -> np.ndarray:
    if not isinstance(data, list) or not data or not all(isinstance(r, list) for r in data):
        raise ModelError(f"{field_name} must be a non-empty list of rows", field=field_name)
    width = len(data[0])
    for i, row in enumerate(data):
        if len(row) != width:
            raise ModelError(
                f"{field_name} is not rectangular: row {i} has length {len(row)}, expected {width}",
                field=field_name,
            )
    try:
        return np.array(data, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ModelError(f"{field_name} contains non-numeric entries", field=field_name) from exc


def system_from_dict(data: dict) -> LtiSystem:
    if not isinstance(data, dict):
        raise ModelError("system description must be a JSON object")
    for key in ("A", "C"):
        if key not in data:
            raise ModelError(f"missing required field {key!r}", field=key)
    A = _matrix(data["A"], "A")
    C = _matrix(data["C"], "C")
    if A.shape[0] != A.shape[1]:
        raise ModelError(f"A must be square, got shape {A.shape}", field="A")
    if C.shape[1] != A.shape[0]:
        raise ModelError(
            f"C rows must have length n_x={A.shape[0]} (expected shape (n_y, {A.shape[0]})), "
            f"got shape {C.shape}",
            field="C",
        )
    adjacency = data.get("adjacency")
    if adjacency is not None:
        adjacency = _matrix(adjacency, "adjacency")
    reactions = data.get("reactions")
    if reactions is not None and not all(isinstance(r, list) for r in reactions):
        raise ModelError("reactions must be a list of index lists", field="reactions")
    return LtiSystem(
        A=A,
        C=C,
        state_labels=tuple(data.get("state_labels") or ()),
        adjacency=adjacency,
        reactions=reactions,
        name=data.get("name"),
    )


def load_system(path: str | Path) -> LtiSystem:
    """Read and validate a system JSON file.

    Missing labels default to ``x0 .. x{n_y-1}``.  Raises :class:`ModelError`
    for parse failures, ragged or mismatched arrays and asymmetric adjacency.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ModelError(f"cannot read system file {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"cannot parse {path}: {exc}") from exc
    return system_from_dict(data)


@dataclass(frozen=True)
class GramianMatrix:
    W: np.ndarray
    horizon: int | str
    selection: tuple[int, ...] = field(default=())


@dataclass(frozen=True)
class ContributionGramians:
    """Per-output contribution Gramians, stacked as ``contribs[v]``."""

    horizon: int | str
    contribs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "contribs", _frozen(self.contribs))

    @property
    def n_y(self) -> int:
        return self.contribs.shape[0]

    @property
    def n_x(self) -> int:
        return self.contribs.shape[1]

    def __len__(self) -> int:
        return self.n_y

    def __getitem__(self, v: int) -> np.ndarray:
        return self.contribs[v]


def _check_horizon(horizon) -> int | str:
    if horizon is None or horizon == INFINITE or horizon == "inf":
        return INFINITE
    if isinstance(horizon, bool) or int(horizon) != horizon or horizon < 1:
        raise ValueError(f"horizon must be a positive integer or 'infinite', got {horizon!r}")
    return int(horizon)


def contribution_gramians(sys: LtiSystem, horizon: int | str = 1000, *, tol: float = 1e-12) -> ContributionGramians:
    """Contribution Gramian of every output row over ``horizon`` steps.

    Uses the row recursion ``p_{k+1} = p_k A`` for all rows of ``C`` at once,
    so ``A^k`` is never formed.  ``horizon="infinite"`` solves one Lyapunov
    equation per row instead.
    """
    horizon = _check_horizon(horizon)
    n_y, n_x = sys.n_y, sys.n_x
    if horizon == INFINITE:
        out = np.empty((n_y, n_x, n_x))
        for v in range(n_y):
            out[v] = _smith(sys.A, np.outer(sys.C[v], sys.C[v]), tol)
        return ContributionGramians(INFINITE, out)

    out = np.zeros((n_y, n_x, n_x))
    rows = np.array(sys.C, dtype=float)
    A = sys.A
    done = 0
    while done < horizon:
        m = min(_CHUNK, horizon - done)
        block = np.empty((m, n_y, n_x))
        for j in range(m):
            block[j] = rows
            rows = rows @ A
        out += np.einsum("kvi,kvj->vij", block, block)
        done += m
    return ContributionGramians(horizon, _symmetrize(out))


def full_gramian(contribs: ContributionGramians, selection: Iterable[int] | None = None) -> GramianMatrix:
    """Sum of the contributions in ``selection`` (all outputs when ``None``)."""
    if selection is None:
        sel = tuple(range(contribs.n_y))
    else:
        sel = tuple(sorted(set(int(v) for v in selection)))
    for v in sel:
        if not 0 <= v < contribs.n_y:
            raise IndexError(f"output index {v} outside [0, {contribs.n_y})")
    if sel:
        W = contribs.contribs[list(sel)].sum(axis=0)
    else:
        W = np.zeros((contribs.n_x, contribs.n_x))
    return GramianMatrix(W=W, horizon=contribs.horizon, selection=sel)


def finite_gramian(sys: LtiSystem, horizon: int) -> np.ndarray:
    return contribution_gramians(sys, horizon).contribs.sum(axis=0)


def _smith(A: np.ndarray, Q: np.ndarray, tol: float, max_doublings: int = 200) -> np.ndarray:
    W = np.array(Q, dtype=float)
    Ak = np.array(A, dtype=float)
    for _ in range(max_doublings):
        update = Ak.T @ W @ Ak
        W = W + update
        Ak = Ak @ Ak
        if np.linalg.norm(update) < tol:
            return _symmetrize(W)
    raise ConvergenceError(f"Smith iteration did not converge in {max_doublings} doublings")


def lyapunov_gramian(sys: LtiSystem, tol: float = 1e-12, *, max_doublings: int = 200) -> GramianMatrix:
    """Infinite-horizon Gramian solving ``A^T W A - W + C^T C = 0``.

    Smith doubling: ``W <- W + A_j^T W A_j``, ``A_{j+1} = A_j^2`` until the
    update drops below ``tol`` in Frobenius norm.
    """
    rho = sys.spectral_radius
    if rho >= 1.0 - 1e-9:
        raise InstabilityError(f"Lyapunov Gramian needs spectral radius < 1, got {rho:.12g}", spectral_radius=rho)
    W = _smith(sys.A, sys.C.T @ sys.C, tol, max_doublings)
    return GramianMatrix(W=W, horizon=INFINITE, selection=tuple(range(sys.n_y)))


def lyapunov_residual(sys: LtiSystem, W: np.ndarray) -> float:
    return float(np.linalg.norm(sys.A.T @ W @ sys.A - W + sys.C.T @ sys.C))


def random_stable_system(
    n_x: int,
    n_y: int | None = None,
    *,
    rho: float = 0.9,
    seed: int = 0,
    identity_output: bool = True,
    density: float = 1.0,
) -> LtiSystem:
    """Random ``A`` rescaled to spectral radius ``rho``; ``C = I`` by default."""
    rng = np.random.default_rng(seed)
    n_y = n_x if n_y is None else n_y
    A = rng.standard_normal((n_x, n_x))
    if density < 1.0:
        mask = rng.random((n_x, n_x)) < density
        np.fill_diagonal(mask, True)
        A = A * mask
    r = np.max(np.abs(np.linalg.eigvals(A)))
    if r > 0:
        A = A * (rho / r)
    if identity_output and n_y == n_x:
        C = np.eye(n_x)
    elif identity_output and n_y < n_x:
        C = np.eye(n_x)[:n_y]
    else:
        C = rng.standard_normal((n_y, n_x))
    return LtiSystem(A=A, C=C)

