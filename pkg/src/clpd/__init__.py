"""Closed-loop primal-dual solver, its continuous-time flow, and benchmarks.

The discrete driver (:mod:`clpd.aapda`) runs an autonomous accelerated
primal-dual iteration whose step scalar is a feedback function of the
Lagrangian gradient norm; :mod:`clpd.ode` simulates the first-order
dynamical system it discretizes. :mod:`clpd.bench` and the ``bench`` CLI
wrap both in a reproducible experiment harness.
"""

from .aapda import AapdaOptions, SolverState, run
from .baselines import BaselineOptions, run_fista, run_lin_alm
from .lagrangian import LagrangianEval, eval_lagrangian, pd_gap
from .metrics import RateReport, energy_monotonicity, fit_rate, residual_series
from .ode import OdeParams, OdeState, initial_state, integrate
from .problem import (
    Problem,
    QuadraticForm,
    RngSpec,
    SaddlePoint,
    gen_equality_qp,
    gen_least_squares,
    load_problem,
    min_norm_least_squares,
    save_problem,
    solve_kkt_saddle,
)
from .subsolver import (
    SubproblemSpec,
    SubSolution,
    make_subproblem,
    operator_norm_estimate,
    solve_subproblem,
)
from .trace import Trace, TrajectoryRecord, read_trace_csv, validate_trace_csv, write_trace_csv

__all__ = [
    "AapdaOptions",
    "BaselineOptions",
    "LagrangianEval",
    "OdeParams",
    "OdeState",
    "Problem",
    "QuadraticForm",
    "RateReport",
    "RngSpec",
    "SaddlePoint",
    "SolverState",
    "SubSolution",
    "SubproblemSpec",
    "Trace",
    "TrajectoryRecord",
    "energy_monotonicity",
    "eval_lagrangian",
    "fit_rate",
    "gen_equality_qp",
    "gen_least_squares",
    "initial_state",
    "integrate",
    "load_problem",
    "make_subproblem",
    "min_norm_least_squares",
    "operator_norm_estimate",
    "pd_gap",
    "read_trace_csv",
    "residual_series",
    "run",
    "run_fista",
    "run_lin_alm",
    "save_problem",
    "solve_kkt_saddle",
    "solve_subproblem",
    "validate_trace_csv",
    "write_trace_csv",
]

__version__ = "0.1.0"
