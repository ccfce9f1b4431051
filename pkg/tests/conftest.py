from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from obspart.measures import SetFunction
from obspart.sysmodel import LtiSystem

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

FIXTURES = Path(__file__).parent / "fixtures"


def modular(weights) -> SetFunction:
    w = np.asarray(weights, dtype=float)
    return SetFunction(w.size, lambda key: float(w[list(key)].sum()))


def coverage(sets) -> SetFunction:
    sets = [frozenset(s) for s in sets]
    return SetFunction(len(sets), lambda key: float(len(frozenset().union(*(sets[i] for i in key)))))


def block_diag5() -> LtiSystem:
    """Two coupled groups {0,1,2} and {3,4} with no coupling between them."""
    A = np.zeros((5, 5))
    A[:3, :3] = [[0.5, 0.3, 0.0], [0.2, 0.4, 0.3], [0.0, 0.3, 0.5]]
    A[3:, 3:] = [[0.6, 0.3], [0.2, 0.5]]
    adj = (np.abs(A) + np.abs(A.T) > 0).astype(float)
    np.fill_diagonal(adj, 0.0)
    return LtiSystem(A, np.eye(5), adjacency=adj, name="block5")


def write_json(path: Path, data) -> Path:
    path.write_text(json.dumps(data), encoding="utf-8")
    return path


@pytest.fixture
def chain5_path() -> Path:
    return FIXTURES / "chain5.json"


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
