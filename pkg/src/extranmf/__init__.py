"""Extrapolated ANLS and A-HALS for nonnegative matrix factorization."""

from .bench import SuiteSpec, algorithm, run_suite
from .data import DatasetSpec, gen_fullrank, gen_lowrank, random_init
from .engine import RunRecord, SolverConfig, run
from .nnls import InnerLoopPolicy, NnlsProblem, active_set_solve, hals_solve

__all__ = [
    "DatasetSpec",
    "InnerLoopPolicy",
    "NnlsProblem",
    "RunRecord",
    "SolverConfig",
    "SuiteSpec",
    "active_set_solve",
    "algorithm",
    "gen_fullrank",
    "gen_lowrank",
    "hals_solve",
    "random_init",
    "run",
    "run_suite",
]

__version__ = "0.1.0"
