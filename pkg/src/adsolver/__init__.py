"""Exact equilibrium prices for linear exchange markets."""
from .errors import (
    ExtractionError,
    FlowError,
    IrreducibilityError,
    IterationCapExceeded,
    NoEquilibriumError,
    PrecisionError,
    SingularMatrixError,
    SolverError,
    ValidationError,
    VerificationFailed,
)
from .market import Market, compose_equilibria, scc_decompose, validate
from .solver import SolveResult, SolverConfig, solve, solve_exact, solve_fixed
from .verify import EquilibriumReport, check_equilibrium, oracle_equilibria, oracle_solve

__version__ = "0.1.0"

__all__ = [
    "EquilibriumReport",
    "ExtractionError",
    "FlowError",
    "IrreducibilityError",
    "IterationCapExceeded",
    "Market",
    "NoEquilibriumError",
    "PrecisionError",
    "SingularMatrixError",
    "SolveResult",
    "SolverConfig",
    "SolverError",
    "ValidationError",
    "VerificationFailed",
    "check_equilibrium",
    "compose_equilibria",
    "oracle_equilibria",
    "oracle_solve",
    "scc_decompose",
    "solve",
    "solve_exact",
    "solve_fixed",
    "validate",
]
