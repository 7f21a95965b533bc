"""Bayesian multiple matching pursuit and greedy sparse-recovery baselines."""

from .detector import CorrelationKind
from .linalg import OrthoBasis, least_squares
from .problem import ProblemInstance, SensingModel, SignalPrior, load_instance, make_instance, save_instance
from .sbl import Mode
from .solvers import RecoveryResult, SolverConfig, bmmp, cosamp, gomp, omp, run_solver, sp

__all__ = [
    "CorrelationKind",
    "Mode",
    "OrthoBasis",
    "ProblemInstance",
    "RecoveryResult",
    "SensingModel",
    "SignalPrior",
    "SolverConfig",
    "bmmp",
    "cosamp",
    "gomp",
    "least_squares",
    "load_instance",
    "make_instance",
    "omp",
    "run_solver",
    "save_instance",
    "sp",
]

__version__ = "0.1.0"
