"""Interaction graphs, modularity and the spectral clustering baseline."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from sklearn.cluster import KMeans

from .errors import GraphError
from .partition import Partition


@dataclass(frozen=True)
class InteractionGraph:
    adj: np.ndarray
    degrees: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        adj = np.array(self.adj, dtype=float)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise GraphError(f"adjacency must be square, got shape {adj.shape}")
        if not np.array_equal(adj, adj.T):
            raise GraphError("adjacency must be symmetric")
        if np.any(np.diag(adj) != 0) or not np.all((adj == 0) | (adj == 1)):
            raise GraphError("adjacency must be 0/1 with a zero diagonal")
        adj.setflags(write=False)
        deg = adj.sum(axis=1)
        deg.setflags(write=False)
        object.__setattr__(self, "adj", adj)
        object.__setattr__(self, "degrees", deg)

    @property
    def n(self) -> int:
        return self.adj.shape[0]

    @property
    def m(self) -> int:
        return int(round(self.degrees.sum() / 2))

    def edges(self) -> list[tuple[int, int]]:
        i, j = np.nonzero(np.triu(self.adj))
        return list(zip(i.tolist(), j.tolist()))


def adjacency_from_reactions(reactions: Sequence[Sequence[int]], n: int) -> InteractionGraph:
    """Connect every pair of distinct species that share a reaction."""
    adj = np.zeros((n, n))
    for r in reactions:
        idx = sorted(set(int(i) for i in r))
        for i in idx:
            if not 0 <= i < n:
                raise GraphError(f"reaction participant {i} outside [0, {n})")
        for a in idx:
            for b in idx:
                if a != b:
                    adj[a, b] = 1.0
    return InteractionGraph(adj)


def graph_of(system) -> InteractionGraph:
    """Interaction graph of a system from its adjacency, else its reaction list."""
    if system.adjacency is not None:
        return InteractionGraph(system.adjacency)
    if system.reactions is not None:
        return adjacency_from_reactions(system.reactions, system.n_x)
    raise GraphError("system has neither adjacency nor reactions")


def modularity(g: InteractionGraph, p: Partition | Sequence[int]) -> float:
    """Newman modularity ``(1/2m) sum_ij [A_ij - a_i a_j / 2m] [block(i) == block(j)]``."""
    if g.m == 0:
        raise GraphError("modularity is undefined for a graph without edges")
    labels = p.labels() if isinstance(p, Partition) else np.asarray(p, dtype=int)
    if labels.shape != (g.n,):
        raise GraphError(f"partition covers {labels.size} nodes, graph has {g.n}")
    two_m = g.degrees.sum()
    same = labels[:, None] == labels[None, :]
    B = g.adj - np.outer(g.degrees, g.degrees) / two_m
    return float(B[same].sum() / two_m)


def normalized_laplacian(adj: np.ndarray) -> np.ndarray:
    deg = adj.sum(axis=1)
    if np.any(deg == 0):
        raise GraphError("normalized Laplacian needs every degree to be positive")
    s = 1.0 / np.sqrt(deg)
    return np.eye(adj.shape[0]) - s[:, None] * adj * s[None, :]


def spectral_partition(g: InteractionGraph, kappa: int, seed: int = 0) -> Partition:
    """Spectral k-means on the normalized Laplacian.

    Isolated nodes become singleton blocks and count toward ``kappa``.  The
    remaining nodes are embedded with the eigenvectors of the ``kappa'``
    smallest eigenvalues, rows normalized to unit length, and clustered by
    k-means++ (20 restarts, 100 iterations).  Blocks are ordered by their
    smallest member; unused slots are left empty.
    """
    if kappa < 1:
        raise GraphError("kappa must be at least 1")
    isolated = np.flatnonzero(g.degrees == 0)
    rest = np.flatnonzero(g.degrees > 0)
    k = kappa - isolated.size
    if rest.size and k < 1:
        raise GraphError(f"kappa={kappa} leaves no block for the connected nodes ({isolated.size} isolated)")
    if k < 0:
        raise GraphError(f"kappa={kappa} is smaller than the {isolated.size} isolated nodes")
    blocks: list[list[int]] = [[int(v)] for v in isolated]
    if rest.size:
        if k > rest.size:
            raise GraphError(f"cannot form {k} clusters from {rest.size} connected nodes")
        if k == 1:
            labels = np.zeros(rest.size, dtype=int)
        else:
            L = normalized_laplacian(g.adj[np.ix_(rest, rest)])
            _, vecs = np.linalg.eigh(L)
            U = vecs[:, :k]
            U = U / np.maximum(np.linalg.norm(U, axis=1, keepdims=True), np.finfo(float).tiny)
            km = KMeans(n_clusters=k, init="k-means++", n_init=20, max_iter=100, random_state=int(seed) % 2**32)
            labels = km.fit_predict(U)
        for c in np.unique(labels):
            blocks.append(rest[labels == c].tolist())
    blocks.sort(key=lambda b: b[0])
    blocks += [[] for _ in range(kappa - len(blocks))]
    return Partition(kappa, tuple(map(tuple, blocks)), "spectral")
