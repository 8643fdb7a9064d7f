"""Effective Hamiltonians for random level-set convex Hamilton-Jacobi equations."""

from __future__ import annotations

from .effective import EffectiveTable, Reconstructor, build_table, property_suite, reconstruct_Hbar
from .env import Environment, HamiltonianFamily, evaluate, sup_hamiltonian, validate_hypotheses
from .errors import (
    ConfigError,
    HomogError,
    HypothesisViolation,
    Inconsistency,
    PreconditionError,
    SolverFailure,
    StatisticsInconsistency,
    UnsupportedRegime,
)
from .macro import MacroSolution, estimate_h, solve_macro
from .metric import FORWARD, REVERSED, Lattice, MetricField, solve_metric, solve_to_points
from .shape import ShapeEstimate, estimate_shape

__all__ = [
    "ConfigError",
    "EffectiveTable",
    "Environment",
    "FORWARD",
    "HamiltonianFamily",
    "HomogError",
    "HypothesisViolation",
    "Inconsistency",
    "Lattice",
    "MacroSolution",
    "MetricField",
    "PreconditionError",
    "REVERSED",
    "Reconstructor",
    "ShapeEstimate",
    "SolverFailure",
    "StatisticsInconsistency",
    "UnsupportedRegime",
    "build_table",
    "estimate_h",
    "estimate_shape",
    "evaluate",
    "property_suite",
    "reconstruct_Hbar",
    "solve_macro",
    "solve_metric",
    "solve_to_points",
    "sup_hamiltonian",
    "validate_hypotheses",
]
