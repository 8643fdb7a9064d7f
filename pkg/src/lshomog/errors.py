"""Exception hierarchy. Each class carries the CLI exit code it maps to."""

from __future__ import annotations


class HomogError(Exception):
    exit_code = 3


class ConfigError(HomogError, ValueError):
    """Malformed or inconsistent configuration."""

    exit_code = 1


class PreconditionError(ConfigError):
    """An operation was called outside its documented domain."""


class UnsupportedRegime(ConfigError):
    """Requested level mu admits negative metric costs (0 outside a sublevel set)."""


class HypothesisViolation(HomogError):
    """A structural hypothesis on H failed on sampled data."""

    exit_code = 2

    def __init__(self, message: str, report: dict | None = None):
        super().__init__(message)
        self.report = report


class SolverFailure(HomogError):
    exit_code = 3


class OptimizationFailure(SolverFailure):
    def __init__(self, message: str, best=None, value: float | None = None):
        super().__init__(message)
        self.best = best
        self.value = value


class DegenerateFamily(SolverFailure):
    pass


class Inconsistency(HomogError):
    """Two computations that must agree do not (solver bug or cross-pipeline mismatch)."""

    exit_code = 4


class StatisticsInconsistency(Inconsistency):
    pass


class SolverBug(SolverFailure):
    """An identity that is exact for shortest paths failed."""
