"""Desk-scale laboratory for non-overlapping domain decomposition."""
from .problem import ProblemSpec, DecomposedProblem, build_problem, assemble_global, oracle_solve

__all__ = ["ProblemSpec", "DecomposedProblem", "build_problem", "assemble_global", "oracle_solve"]
__version__ = "0.1.0"
