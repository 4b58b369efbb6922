"""Bounded MILP modelling, LP-relaxation simplex, branch-and-bound and a brute-force oracle."""

from .bnb import branch_and_bound
from .brute import BruteForceRefused, OracleError, brute_force, domain_size
from .model import (
    BINARY,
    CONTINUOUS,
    EQ,
    GE,
    INTEGER,
    LE,
    MAX,
    MIN,
    Constraint,
    Evaluation,
    LpSolution,
    MilpModel,
    MipSolution,
    ModelError,
    SolveLimits,
    Variable,
    evaluate,
    to_lp_text,
)
from .highs import solve_highs, solve_mip
from .simplex import SimplexError, simplex_solve

__all__ = [
    "BINARY", "CONTINUOUS", "EQ", "GE", "INTEGER", "LE", "MAX", "MIN",
    "BruteForceRefused", "Constraint", "Evaluation", "LpSolution", "MilpModel",
    "MipSolution", "ModelError", "OracleError", "SimplexError", "SolveLimits", "Variable",
    "branch_and_bound", "brute_force", "domain_size", "evaluate", "simplex_solve", "solve_highs", "solve_mip", "to_lp_text",
]
