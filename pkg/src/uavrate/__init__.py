"""Completion-time minimization for a UAV collecting uplink data from ground
nodes, with minimum expected spectral-efficiency constraints evaluated
through a quantile lower bound."""

from .core_model import DesignVars, DomainError, EnvParams, Scenario, validate_design
from .optimizer import PenaltyConfig, run_algorithm1
from .stats import QuadratureGrid, build_grids

__all__ = [
    "DesignVars",
    "DomainError",
    "EnvParams",
    "PenaltyConfig",
    "QuadratureGrid",
    "Scenario",
    "build_grids",
    "run_algorithm1",
    "validate_design",
]
