"""Optimal dividends, proportional reinsurance and capital injections for a compound Poisson surplus."""

from .closedform import ClosedFormPolicy, ConvergenceError, ExpModel, LaplaceRoots, optimize_policy
from .hjbsolver import Grid, HjbSolution, howard_solve, validate_solution
from .model import (
    ExponentialClaims,
    ModelError,
    ModelParams,
    RetentionBounds,
    UniformClaims,
    lowest_retention,
    premium_rate,
)
from .simulate import SimOutcome, Strategy, estimate_value, simulate_path

__all__ = [
    "ClosedFormPolicy",
    "ConvergenceError",
    "ExpModel",
    "ExponentialClaims",
    "Grid",
    "HjbSolution",
    "LaplaceRoots",
    "ModelError",
    "ModelParams",
    "RetentionBounds",
    "SimOutcome",
    "Strategy",
    "UniformClaims",
    "estimate_value",
    "howard_solve",
    "lowest_retention",
    "optimize_policy",
    "premium_rate",
    "simulate_path",
    "validate_solution",
]
