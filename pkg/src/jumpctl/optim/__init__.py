"""Constrained-optimization layer: active-set QP and SQP nonlinear solver."""

from .nlp import NlpProblem, check_derivatives, solve_nlp
from .qp import QpProblem, SolveReport, solve_qp

__all__ = [
    "NlpProblem",
    "QpProblem",
    "SolveReport",
    "check_derivatives",
    "solve_nlp",
    "solve_qp",
]
