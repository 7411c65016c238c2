"""Monge-Ampere potentials, their linearized operator, Green's functions and capacities."""

from __future__ import annotations

from .capacity import CapacityResult, capacity
from .errors import (
    AssemblyError,
    ConfigurationError,
    DegenerateError,
    DomainError,
    MagreenError,
    NotCompactlyContainedError,
    ParameterError,
    SolverFailureError,
)
from .fits import FitReport
from .green import GreenFunction, green_function
from .grid import ConvexDomain, Grid, Region, build_grid, parse_domain
from .operator import LinearizedOperator, assemble_operator
from .sections import Section, build_section
from .solver import DensitySpec, PotentialState, potential_from_function, solve_monge_ampere

__version__ = "0.1.0"

__all__ = [
    "AssemblyError", "CapacityResult", "ConfigurationError", "ConvexDomain", "DegenerateError",
    "DensitySpec", "DomainError", "FitReport", "Grid", "GreenFunction", "LinearizedOperator",
    "MagreenError", "NotCompactlyContainedError", "ParameterError", "PotentialState", "Region",
    "Section", "SolverFailureError", "assemble_operator", "build_grid", "build_section", "capacity",
    "green_function", "parse_domain", "potential_from_function", "solve_monge_ampere",
]
