"""Kalman-filter scoring of a sensor set by Monte Carlo relative error."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import EstimationError, InstabilityError
from .maximize import sample_rng
from .sysmodel import LtiSystem

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class KfConfig:
    Qn: float = 1e-4
    Rn: float = 1e-4
    P0: float = 1e-1
    trials: int = 50
    N: int = 1000
    seed: int = 0

    def __post_init__(self):
        for name in ("Qn", "Rn", "P0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.N < 1:
            raise ValueError("N must be >= 1")

    def to_dict(self) -> dict:
        return {"Qn": self.Qn, "Rn": self.Rn, "P0": self.P0, "trials": self.trials, "N": self.N, "seed": self.seed}


@dataclass(frozen=True)
class KfResult:
    per_trial: np.ndarray
    mean: float
    std: float
    covariance: np.ndarray  # predicted error covariance after the last step
    error_trace: np.ndarray  # trial-averaged relative error per step

    def to_dict(self) -> dict:
        return {"per_trial": self.per_trial.tolist(), "mean": self.mean, "std": self.std}


def _sym(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + P.T)


def kalman_gains(A: np.ndarray, C: np.ndarray, cfg: KfConfig) -> tuple[np.ndarray, np.ndarray]:
    """Gains ``K_k`` for ``k < N`` and the final predicted covariance.

    The covariance recursion does not depend on the data, so it runs once.
    Updates use the Joseph form and are symmetrized every step.
    """
    n_x, n_y = A.shape[0], C.shape[0]
    I = np.eye(n_x)
    P = cfg.P0 * I
    R = cfg.Rn * np.eye(n_y)
    gains = np.empty((cfg.N, n_x, n_y))
    for k in range(cfg.N):
        S = _sym(C @ P @ C.T + R)
        eig = np.linalg.eigvalsh(S)
        if eig[0] <= n_y * _EPS * max(eig[-1], 0.0):
            raise EstimationError(f"innovation covariance is singular at step {k}; Rn={cfg.Rn:g} is too small")
        K = np.linalg.solve(S, C @ P).T
        J = I - K @ C
        P = _sym(J @ P @ J.T + K @ R @ K.T)
        gains[k] = K
        P = _sym(A @ P @ A.T + cfg.Qn * I)
    return gains, P


def kalman_score(sys: LtiSystem, R_set: Iterable[int], cfg: KfConfig | None = None) -> KfResult:
    """Time-averaged relative error ``||xhat - x|| / ||x||`` over seeded trials.

    Trial ``t`` draws ``x0 ~ N(0, P0 I)``, then process noise and measurement
    noise for all outputs from the stream ``(seed, t)``; only the rows in
    ``R_set`` are used, so nested sensor sets see the same noise.
    """
    cfg = cfg or KfConfig()
    R_idx = sorted(set(int(v) for v in R_set))
    if not R_idx:
        raise EstimationError("sensor set is empty")
    if any(not 0 <= v < sys.n_y for v in R_idx):
        raise EstimationError(f"sensor index outside [0, {sys.n_y})")
    rho = sys.spectral_radius
    if rho > 1 + 1e-9:
        raise InstabilityError(f"Kalman scoring needs spectral radius <= 1, got {rho:.12g}", spectral_radius=rho)
    A, C = sys.A, sys.C[R_idx]
    n_x, n_all = sys.n_x, sys.n_y
    gains, P_final = kalman_gains(A, C, cfg)

    T, N = cfg.trials, cfg.N
    x = np.empty((T, n_x))
    w = np.empty((T, N, n_x))
    v = np.empty((T, N, len(R_idx)))
    for t in range(T):
        rng = sample_rng(cfg.seed, t)
        x[t] = np.sqrt(cfg.P0) * rng.standard_normal(n_x)
        w[t] = np.sqrt(cfg.Qn) * rng.standard_normal((N, n_x))
        v[t] = np.sqrt(cfg.Rn) * rng.standard_normal((N, n_all))[:, R_idx]

    xhat = np.zeros((T, n_x))
    errors = np.empty((N, T))
    tiny = np.finfo(float).tiny
    for k in range(N):
        y = x @ C.T + v[:, k]
        xhat = xhat + (y - xhat @ C.T) @ gains[k].T
        errors[k] = np.linalg.norm(xhat - x, axis=1) / np.maximum(np.linalg.norm(x, axis=1), tiny)
        x = x @ A.T + w[:, k]
        xhat = xhat @ A.T
    per_trial = errors.mean(axis=0)
    std = float(per_trial.std(ddof=1)) if T > 1 else 0.0
    return KfResult(per_trial, float(per_trial.mean()), std, P_final, errors.mean(axis=1))
