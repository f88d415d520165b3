"""Linear-feedback equilibria for two-player time-inconsistent linear-quadratic games.

Typical use::

    from tilq import ProblemSpec, solve_all, feedback
    spec = ProblemSpec.load("configs/case_i_a.json")
    sol = solve_all(spec)
    strat = feedback(spec, sol)
"""
from .errors import (BoundViolation, DivisionByZero, InvalidPath, NonPositive, NotPSD,
                     SingularLinearSystem, SolverError, TilqError, UnsupportedSpec,
                     ValidationError)
from .model import ProblemSpec, TimeGrid, check_conditions, validate
from .riccati import RiccatiSolution, solve_all
from .strategy import FeedbackStrategy, feedback, lambda_diag

__version__ = "0.1.0"

__all__ = [
    "BoundViolation", "DivisionByZero", "FeedbackStrategy", "InvalidPath", "NonPositive",
    "NotPSD", "ProblemSpec", "RiccatiSolution", "SingularLinearSystem", "SolverError",
    "TilqError", "TimeGrid", "UnsupportedSpec", "ValidationError", "check_conditions",
    "feedback", "lambda_diag", "solve_all", "validate", "__version__",
]
