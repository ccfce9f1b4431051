"""Observability-driven partitioning and sensor placement for LTI systems."""

__version__ = "0.1.0"

from .errors import (
    ConvergenceError,
    EstimationError,
    GraphError,
    GuardError,
    InfeasibleError,
    InstabilityError,
    ModelError,
    ObspartError,
)
from .sysmodel import (
    ContributionGramians,
    GramianMatrix,
    LtiSystem,
    contribution_gramians,
    full_gramian,
    load_system,
    lyapunov_gramian,
    random_stable_system,
    system_from_dict,
)
from .measures import Metric, SetFunction, make_set_function, measure
from .matroids import PartitionMatroid, build_extended_matroid, max_weight_independent, partition_matroid, uniform_matroid
from .maximize import (
    FractionalPoint,
    SolverConfig,
    SolveTrace,
    continuous_greedy,
    gradient_estimate,
    greedy,
    multilinear_estimate,
    round_fractional,
)
from .partition import Partition, PartitionReport, build_p2_objective, decode_p2, encode_p1, solve_partition
from .placement import BoundDiagnostic, SensorConfig, bound_check, budgets_from_total, solve_placement
from .graphkit import InteractionGraph, adjacency_from_reactions, modularity, spectral_partition
from .estimator import KfConfig, kalman_score
from .oracle import brute_partition, brute_placement, check_submodular_monotone

__all__ = [name for name in dir() if not name.startswith("_")]
