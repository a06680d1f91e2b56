"""AAPDA: adaptive autonomous primal-dual algorithm.

The driver alternates a closed-loop step scalar mu = ||grad_x L||^(-(p-1)/p),
the scaling recurrences gamma_{k+1} = mu_k and tau_{k+1} = gamma_k + tau_k,
a gradient-corrected extrapolation, an exact (or tolerance-controlled)
primal subproblem, a momentum point, and a dual ascent step. Because mu is
a function of the current state only, the iteration is autonomous: no
externally scheduled step sizes appear anywhere.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .errors import (
    InvalidDimensionError,
    InvalidParameterError,
    NonpositiveGradientError,
    SaddleCertificateError,
    SubproblemNotConverged,
)
from .lagrangian import eval_lagrangian, saddle_value
from .problem import Problem, SaddlePoint
from .subsolver import (
    DIRECT_THRESHOLD,
    make_subproblem,
    solve_subproblem,
    spectral_cache,
)
from .trace import IterationRecord, Trace

PSchedule = Union[float, int, str, Callable[[int], float]]


@dataclass
class AapdaOptions:
    """Tuning knobs; defaults follow the benchmark settings.

    ``p_schedule`` is a constant exponent, the string "k" for p_k = k, or a
    callable k -> p_k. ``grad_stop_eps=None`` resolves at run time to
    1e-14 * (1 + ||grad f(x_1)||), which keeps mu finite near stationarity
    for p > 1. ``mu_floor`` (off by default) clips mu from below, matching
    the hypothesis under which the energy sequence is provably monotone.
    """

    p_schedule: PSchedule = 4.0
    gamma_1: float = 1.0
    max_iterations: int = 100
    stop_theta: float = 1e-6
    grad_stop_eps: Optional[float] = None
    mu_floor: Optional[float] = None
    sub_tol: float = 1e-10
    init_x: Optional[np.ndarray] = None
    init_lambda: Optional[np.ndarray] = None
    sub_method: Optional[str] = None
    direct_threshold: int = DIRECT_THRESHOLD
    keep_history: bool = False

    def __post_init__(self):
        if self.gamma_1 <= 0.0:
            raise InvalidParameterError("gamma_1 must be positive")
        if self.max_iterations < 1:
            raise InvalidParameterError("max_iterations must be >= 1")
        if self.stop_theta <= 0.0:
            raise InvalidParameterError("stop_theta must be positive")
        if self.sub_tol <= 0.0:
            raise InvalidParameterError("sub_tol must be positive")
        if self.mu_floor is not None and self.mu_floor < 1.0:
            raise InvalidParameterError("mu_floor must be >= 1 when set")

    def p_at(self, k: int) -> float:
        if callable(self.p_schedule):
            p = float(self.p_schedule(k))
        elif isinstance(self.p_schedule, str):
            if self.p_schedule != "k":
                raise InvalidParameterError(
                    f"unknown p schedule {self.p_schedule!r}; use a number or 'k'"
                )
            p = float(max(k, 1))
        else:
            p = float(self.p_schedule)
        if p < 1.0:
            raise InvalidParameterError(f"p must be >= 1, got {p} at k={k}")
        return p

    def p_label(self) -> str:
        if callable(self.p_schedule):
            return "callable"
        return str(self.p_schedule)


@dataclass
class SolverState:
    """Mutable iteration state owned by a single run."""

    k: int
    x_curr: np.ndarray
    x_prev: np.ndarray
    lambda_curr: np.ndarray
    gamma_curr: float
    gamma_next: float
    tau_curr: float
    tau_next: float
    mu_curr: float
    grad_x_curr: np.ndarray


def step_mu(grad_norm: float, p: float, mu_floor: Optional[float] = None) -> float:
    """Closed-loop step scalar: grad_norm^(-(p-1)/p), optionally floored."""
    if grad_norm <= 0.0:
        raise NonpositiveGradientError(
            "mu is undefined at zero gradient; the stop branch should have fired"
        )
    if p < 1.0:
        raise InvalidParameterError("p must be >= 1")
    mu = grad_norm ** (-(p - 1.0) / p)
    if mu_floor is not None:
        mu = max(mu, mu_floor)
    return mu


def advance_scaling(state: SolverState, mu: float):
    """gamma_{k+1} = mu_k and tau_{k+1} = gamma_k + tau_k, stored exactly."""
    state.mu_curr = mu
    state.gamma_next = mu
    state.tau_next = state.gamma_curr + state.tau_curr
    return state.gamma_next, state.tau_next


def extrapolate(state: SolverState) -> np.ndarray:
    """Extrapolated point mixing momentum with the cached Lagrangian gradient."""
    coeff = state.gamma_next / (state.gamma_next + state.tau_next)
    momentum = (state.tau_curr / state.gamma_curr) * (state.x_curr - state.x_prev)
    return state.x_curr + coeff * (momentum + state.gamma_curr * state.grad_x_curr)


def dual_shift(state: SolverState, problem: Problem, ax: Optional[np.ndarray] = None):
    """Target sigma_{k+1} = (tau Ax_k + gamma b - lam_k) / (gamma + tau)."""
    if problem.dim_dual == 0:
        return np.zeros(0)
    if ax is None:
        ax = problem.constraint_matvec(state.x_curr)
    s = state.gamma_next + state.tau_next
    return (state.tau_next * ax + state.gamma_next * problem.rhs_b - state.lambda_curr) / s


def momentum_point(
    x_next: np.ndarray, x_curr: np.ndarray, tau_next: float, gamma_next: float
) -> np.ndarray:
    """y_{k+1} = x_{k+1} + (tau_{k+1}/gamma_{k+1}) (x_{k+1} - x_k)."""
    return x_next + (tau_next / gamma_next) * (x_next - x_curr)


def dual_update(
    lambda_curr: np.ndarray, gamma_next: float, y_next: np.ndarray, problem: Problem
) -> np.ndarray:
    """lam_{k+1} = lam_k + gamma_{k+1} (A y_{k+1} - b); empty when m = 0."""
    if problem.dim_dual == 0:
        return np.zeros(0)
    return lambda_curr + gamma_next * (problem.constraint_matvec(y_next) - problem.rhs_b)


def should_stop(x_next: np.ndarray, x_curr: np.ndarray, theta: float) -> bool:
    """Relative change test ||x_{k+1}-x_k|| / max(||x_k||, 1) <= theta."""
    denom = max(float(np.linalg.norm(x_curr)), 1.0)
    return float(np.linalg.norm(x_next - x_curr)) / denom <= theta


def _gap_against_saddle(l_x: float, l_star: float) -> float:
    gap = l_x - l_star
    if gap < -1e-12 * (1.0 + abs(l_star)):
        raise SaddleCertificateError(
            f"primal-dual gap {gap:.3e} is negative beyond tolerance"
        )
    return gap


def run(problem: Problem, opts: AapdaOptions, saddle: Optional[SaddlePoint] = None) -> Trace:
    """Execute the full loop and return a per-iteration trace.

    Record k describes the iterate (x_k, lam_k) together with the scalars
    computed while stepping away from it. When a saddle certificate is
    supplied, the trace also carries the primal-dual gap and the discrete
    energy E_k = tau_{k+1} (L(x_k,lam*) - L*) + ||u_k||^2/2
    + ||lam_k - lam*||^2/2 with u_k = y_k - x* + gamma_k grad_x L(x_k,lam_k)
    and y_1 = x_1.
    """
    n, m = problem.dim_primal, problem.dim_dual
    x = np.zeros(n) if opts.init_x is None else np.array(opts.init_x, dtype=float)
    lam = np.zeros(m) if opts.init_lambda is None else np.array(opts.init_lambda, dtype=float)
    if x.shape != (n,):
        raise InvalidDimensionError(f"init_x has shape {x.shape}, expected ({n},)")
    if lam.shape != (m,):
        raise InvalidDimensionError(f"init_lambda has shape {lam.shape}, expected ({m},)")

    grad_eps = opts.grad_stop_eps
    if grad_eps is None:
        grad_eps = 1e-14 * (1.0 + float(np.linalg.norm(problem.f_grad(x))))

    gram = None
    spectral = None
    if (
        problem.quadratic_form is not None
        and opts.sub_method != "cg"
        and n <= opts.direct_threshold
    ):
        spectral = spectral_cache(problem)
        if spectral is None and problem.constraint_dense is not None:
            a_mat = problem.constraint_dense
            gram = a_mat.T @ a_mat

    l_star = f_star = None
    if saddle is not None:
        l_star = saddle_value(problem, saddle)
        f_star = problem.f_value(saddle.x_star)

    header = {"solver": "aapda"}
    for key, value in problem.meta.items():
        if not isinstance(value, np.ndarray):
            header[f"problem_{key}"] = value
    header.update(
        {
            "p": opts.p_label(),
            "gamma_1": opts.gamma_1,
            "theta": opts.stop_theta,
            "cap": opts.max_iterations,
            "mu_floor": "off" if opts.mu_floor is None else opts.mu_floor,
            "grad_stop_eps": grad_eps,
            "sub_tol": opts.sub_tol,
        }
    )
    if f_star is not None:
        header["f_star"] = f_star

    trace = Trace(header=header)
    history = (
        {"x": [], "lam": [], "y": [], "grad": [], "gamma": [], "tau": [], "mu": []}
        if opts.keep_history
        else None
    )

    state = SolverState(
        k=1,
        x_curr=x,
        x_prev=x.copy(),  # x_0 = x_1
        lambda_curr=lam,
        gamma_curr=float(opts.gamma_1),
        gamma_next=float("nan"),
        tau_curr=0.0,  # tau_1 = 0
        tau_next=float("nan"),
        mu_curr=float("nan"),
        grad_x_curr=np.zeros(n),
    )
    y = x.copy()  # y_1 := x_1, consistent with tau_1 = 0
    ev = eval_lagrangian(problem, state.x_curr, state.lambda_curr)
    stop_reason = "max_iterations"
    mu_nondecreasing = True
    prev_mu = None

    for k in range(1, opts.max_iterations + 1):
        started = time.perf_counter_ns()
        state.k = k
        state.grad_x_curr = ev.grad_x
        gnorm = ev.grad_x_norm
        feas = float(np.linalg.norm(ev.grad_lambda)) if m else 0.0
        fx = problem.f_value(state.x_curr)

        if history is not None:
            history["x"].append(state.x_curr.copy())
            history["lam"].append(state.lambda_curr.copy())
            history["y"].append(y.copy())
            history["grad"].append(ev.grad_x.copy())
            history["gamma"].append(state.gamma_curr)
            history["tau"].append(state.tau_curr)

        if gnorm <= grad_eps:
            pd = energy = None
            if saddle is not None:
                gap = _gap_against_saddle(
                    fx + (float(saddle.lambda_star @ ev.grad_lambda) if m else 0.0),
                    l_star,
                )
                pd = max(gap, 0.0)
                u = y - saddle.x_star + state.gamma_curr * ev.grad_x
                tau_next = state.gamma_curr + state.tau_curr
                energy = (
                    tau_next * gap
                    + 0.5 * float(u @ u)
                    + 0.5 * float(np.linalg.norm(state.lambda_curr - saddle.lambda_star) ** 2)
                )
            trace.records.append(
                IterationRecord(
                    k=k,
                    grad_norm=gnorm,
                    f_value=fx,
                    feas=feas,
                    pd_gap=pd,
                    energy=energy,
                    wall_ns=time.perf_counter_ns() - started,
                )
            )
            stop_reason = "gradient"
            break

        mu = step_mu(gnorm, opts.p_at(k), opts.mu_floor)
        if prev_mu is not None and mu < prev_mu:
            mu_nondecreasing = False
        prev_mu = mu
        if history is not None:
            history["mu"].append(mu)
        advance_scaling(state, mu)
        xbar = extrapolate(state)
        ax = ev.grad_lambda + problem.rhs_b if m else None
        sigma = dual_shift(state, problem, ax=ax)
        spec = make_subproblem(problem, xbar, sigma, state.gamma_next, state.tau_next)
        try:
            sol = solve_subproblem(
                spec,
                opts.sub_tol,
                method=opts.sub_method,
                direct_threshold=opts.direct_threshold,
                gram=gram,
                spectral=spectral,
            )
        except SubproblemNotConverged as exc:
            exc.trace = trace
            raise
        x_next = sol.x_next
        y_next = momentum_point(x_next, state.x_curr, state.tau_next, state.gamma_next)
        if m:
            # Dual ascent in telescoped form: gamma_{k+1} (A y_{k+1} - b)
            # equals tau_{k+2} (A x_{k+1} - b) - tau_{k+1} (A x_k - b)
            # exactly (expand y_{k+1} and the tau recurrence). Evaluating it
            # this way avoids amplifying the Ay - b cancellation by gamma.
            residual_next = problem.constraint_matvec(x_next) - problem.rhs_b
            tau_after = state.gamma_next + state.tau_next
            lam_next = state.lambda_curr + (
                tau_after * residual_next - state.tau_next * ev.grad_lambda
            )
        else:
            lam_next = state.lambda_curr

        pd = energy = None
        if saddle is not None:
            gap = _gap_against_saddle(
                fx + (float(saddle.lambda_star @ ev.grad_lambda) if m else 0.0), l_star
            )
            pd = max(gap, 0.0)
            u = y - saddle.x_star + state.gamma_curr * ev.grad_x
            energy = (
                state.tau_next * gap
                + 0.5 * float(u @ u)
                + 0.5 * float(np.linalg.norm(state.lambda_curr - saddle.lambda_star) ** 2)
            )
        trace.records.append(
            IterationRecord(
                k=k,
                mu=mu,
                gamma_next=state.gamma_next,
                tau_next=state.tau_next,
                grad_norm=gnorm,
                f_value=fx,
                feas=feas,
                pd_gap=pd,
                energy=energy,
                sub_stat=sol.stationarity_norm,
                wall_ns=time.perf_counter_ns() - started,
                mu_hypothesis_ok=mu >= 1.0,
            )
        )

        state.x_prev = state.x_curr
        state.x_curr = x_next
        state.lambda_curr = lam_next
        y = y_next
        state.gamma_curr = state.gamma_next
        state.tau_curr = state.tau_next
        ev = eval_lagrangian(problem, state.x_curr, state.lambda_curr)
        if should_stop(state.x_curr, state.x_prev, opts.stop_theta):
            stop_reason = "step"
            break

    if history is not None:
        if stop_reason != "gradient":
            # Append the final iterate so identity checks can close the window.
            history["x"].append(state.x_curr.copy())
            history["lam"].append(state.lambda_curr.copy())
            history["y"].append(y.copy())
            history["grad"].append(ev.grad_x.copy())
            history["gamma"].append(state.gamma_curr)
            history["tau"].append(state.tau_curr)
        trace.final["history"] = history

    final_feas = float(np.linalg.norm(ev.grad_lambda)) if m else 0.0
    trace.final.update(
        {
            "stop_reason": stop_reason,
            "iterations": len(trace.records),
            "grad_norm": ev.grad_x_norm,
            "f_value": problem.f_value(state.x_curr),
            "feas": final_feas,
            "x_final": state.x_curr,
            "lambda_final": state.lambda_curr,
            "mu_nondecreasing": mu_nondecreasing,
            "mu_hypothesis_violations": sum(
                1 for rec in trace.records if rec.mu_hypothesis_ok is False
            ),
        }
    )
    if f_star is not None:
        trace.final["f_gap"] = abs(trace.final["f_value"] - f_star)
    return trace
