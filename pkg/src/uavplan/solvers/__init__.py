"""Exact assignment, barrier interior-point and branch-and-bound solvers."""

from .assignment import (AssignmentInfeasible, AssignmentProblem, assignment_cost, max_served,
                         solve_assignment)
from .barrier import (ConvexProgram, LogConstraints, QuadConstraint, SocConstraint, SolveReport,
                      solve_convex)
from .bnb import solve_binary_bnb

__all__ = [
    "AssignmentProblem",
    "AssignmentInfeasible",
    "assignment_cost",
    "solve_assignment",
    "max_served",
    "ConvexProgram",
    "LogConstraints",
    "QuadConstraint",
    "SocConstraint",
    "SolveReport",
    "solve_convex",
    "solve_binary_bnb",
]
