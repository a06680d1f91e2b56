"""Reference first-order methods for the benchmark harness.

``run_fista`` is the classical accelerated gradient method for the
unconstrained runs; ``run_lin_alm`` is a generic linearized augmented
Lagrangian for the constrained ones. Both are stand-ins for external
comparators and share the AAPDA trace schema (the AAPDA-specific scalar
columns stay empty). Trace row k holds the iterate after k completed
steps, which is the indexing under which the classical FISTA bound
f(x_k) - f* <= 2||x_0 - x*||^2 / (alpha (k+1)^2) applies.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DivergenceError, InvalidParameterError, UnsupportedProblemError
from .lagrangian import eval_lagrangian, saddle_value
from .problem import Problem, SaddlePoint
from .subsolver import operator_norm_estimate
from .trace import IterationRecord, Trace

_STEP_HEADROOM = 1.001  # power iteration estimates the norm from below


@dataclass
class BaselineOptions:
    method: str = "fista"  # fista | lin-alm
    step_size: Optional[float] = None  # None: 1/||A||^2 (fista), 1/(L+rho||A||^2) (lin-alm)
    penalty: float = 1.0  # lin-alm quadratic penalty rho
    dual_step: Optional[float] = None  # lin-alm beta; None: same as penalty
    max_iterations: int = 200
    stop_theta: float = 1e-6
    init_x: Optional[np.ndarray] = None
    init_lambda: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.method not in ("fista", "lin-alm"):
            raise InvalidParameterError(f"unknown baseline method {self.method!r}")
        if self.step_size is not None and self.step_size <= 0.0:
            raise InvalidParameterError("step size must be positive")
        if self.penalty <= 0.0:
            raise InvalidParameterError("penalty must be positive")
        if self.max_iterations < 1:
            raise InvalidParameterError("max_iterations must be >= 1")
        if self.stop_theta <= 0.0:
            raise InvalidParameterError("stop_theta must be positive")


def _curvature_bound(problem: Problem) -> float:
    """Upper bound on the Lipschitz constant of grad f."""
    if problem.lipschitz_hint is not None:
        return problem.lipschitz_hint
    quad = problem.quadratic_form
    if quad is None:
        raise UnsupportedProblemError("need lipschitz_hint or a quadratic form")
    if quad.scale is not None:
        return quad.scale
    # Power-iterate Q through a throwaway unconstrained view.
    sqrt_norm = operator_norm_estimate(
        Problem(
            dim_primal=problem.dim_primal,
            dim_dual=0,
            f_value=problem.f_value,
            f_grad=problem.f_grad,
            constraint_matvec=lambda x: np.zeros(0),
            constraint_adjoint=lambda lam: np.zeros(problem.dim_primal),
            rhs_b=np.zeros(0),
            quadratic_form=quad,
        ),
        500,
    )
    return (sqrt_norm * _STEP_HEADROOM) ** 2


def _base_header(problem: Problem, solver: str, saddle, opts: BaselineOptions) -> dict:
    header = {"solver": solver, "theta": opts.stop_theta, "cap": opts.max_iterations}
    for key, value in problem.meta.items():
        if not isinstance(value, np.ndarray):
            header[f"problem_{key}"] = value
    if saddle is not None:
        header["f_star"] = problem.f_value(saddle.x_star)
    return header


def run_fista(
    problem: Problem, opts: BaselineOptions, saddle: Optional[SaddlePoint] = None
) -> Trace:
    """Accelerated gradient with t_{k+1} = (1 + sqrt(1+4 t_k^2))/2 momentum.

    Requires an unconstrained problem (dim_dual = 0). The default step is
    1/||A||^2 for least-squares objectives, i.e. one over the curvature
    bound, with a small headroom so the step never exceeds 1/L.
    """
    if problem.dim_dual != 0:
        raise UnsupportedProblemError("fista handles unconstrained problems only")
    n = problem.dim_primal
    alpha = opts.step_size
    if alpha is None:
        curv = _curvature_bound(problem)
        alpha = 1.0 / curv if curv > 0 else 1.0

    x = np.zeros(n) if opts.init_x is None else np.array(opts.init_x, dtype=float)
    f_star = None if saddle is None else problem.f_value(saddle.x_star)

    header = _base_header(problem, "fista", saddle, opts)
    header["alpha"] = alpha
    trace = Trace(header=header)

    grad0 = problem.f_grad(x)
    grad_eps = 1e-14 * (1.0 + float(np.linalg.norm(grad0)))
    y = x.copy()
    t = 1.0
    gnorm = float(np.linalg.norm(grad0))
    stop_reason = "max_iterations"
    if gnorm <= grad_eps:
        stop_reason = "gradient"
    else:
        for k in range(1, opts.max_iterations + 1):
            started = time.perf_counter_ns()
            x_new = y - alpha * problem.f_grad(y)
            t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            y = x_new + ((t - 1.0) / t_new) * (x_new - x)
            x_old, x, t = x, x_new, t_new

            gnorm = float(np.linalg.norm(problem.f_grad(x)))
            fx = problem.f_value(x)
            pd = None if f_star is None else max(fx - f_star, 0.0)
            trace.records.append(
                IterationRecord(
                    k=k,
                    grad_norm=gnorm,
                    f_value=fx,
                    feas=0.0,
                    pd_gap=pd,
                    wall_ns=time.perf_counter_ns() - started,
                )
            )
            rel = float(np.linalg.norm(x - x_old)) / max(float(np.linalg.norm(x_old)), 1.0)
            if rel <= opts.stop_theta:
                stop_reason = "step"
                break
            if gnorm <= grad_eps:
                stop_reason = "gradient"
                break

    trace.final.update(
        {
            "stop_reason": stop_reason,
            "iterations": len(trace.records),
            "grad_norm": gnorm,
            "f_value": problem.f_value(x),
            "feas": 0.0,
            "x_final": x,
        }
    )
    return trace


def run_lin_alm(
    problem: Problem, opts: BaselineOptions, saddle: Optional[SaddlePoint] = None
) -> Trace:
    """Linearized augmented Lagrangian: gradient step on
    f + <lam, Ax-b> + (rho/2)||Ax-b||^2, then dual ascent lam += beta (Ax-b).
    """
    if problem.dim_dual < 1:
        raise UnsupportedProblemError("lin-alm needs at least one constraint")
    n, m = problem.dim_primal, problem.dim_dual
    rho = opts.penalty
    beta = rho if opts.dual_step is None else opts.dual_step
    a_norm = operator_norm_estimate(problem, 500) * _STEP_HEADROOM
    alpha = opts.step_size
    if alpha is None:
        alpha = 1.0 / (_curvature_bound(problem) + rho * a_norm * a_norm)

    x = np.zeros(n) if opts.init_x is None else np.array(opts.init_x, dtype=float)
    lam = np.zeros(m) if opts.init_lambda is None else np.array(opts.init_lambda, dtype=float)
    l_star = f_star = None
    if saddle is not None:
        l_star = saddle_value(problem, saddle)
        f_star = problem.f_value(saddle.x_star)

    header = _base_header(problem, "lin-alm", saddle, opts)
    header.update({"alpha": alpha, "penalty": rho, "dual_step": beta})
    trace = Trace(header=header)

    feas0 = problem.feasibility(x)
    stop_reason = "max_iterations"
    ev = eval_lagrangian(problem, x, lam)
    for k in range(1, opts.max_iterations + 1):
        started = time.perf_counter_ns()
        residual = ev.grad_lambda  # Ax - b at the current iterate
        grad = ev.grad_x + rho * problem.constraint_adjoint(residual)
        x_new = x - alpha * grad
        lam = lam + beta * (problem.constraint_matvec(x_new) - problem.rhs_b)
        x_old, x = x, x_new

        ev = eval_lagrangian(problem, x, lam)
        fx = problem.f_value(x)
        feas = float(np.linalg.norm(ev.grad_lambda))
        pd = None
        if saddle is not None:
            l_x = fx + float(saddle.lambda_star @ ev.grad_lambda)
            pd = max(l_x - l_star, 0.0)
        trace.records.append(
            IterationRecord(
                k=k,
                grad_norm=ev.grad_x_norm,
                f_value=fx,
                feas=feas,
                pd_gap=pd,
                wall_ns=time.perf_counter_ns() - started,
            )
        )
        if feas > 1e6 * (feas0 + 1.0):
            exc = DivergenceError(
                f"feasibility residual grew to {feas:.3e} from {feas0:.3e}"
            )
            exc.trace = trace
            raise exc
        rel = float(np.linalg.norm(x - x_old)) / max(float(np.linalg.norm(x_old)), 1.0)
        if rel <= opts.stop_theta:
            stop_reason = "step"
            break

    trace.final.update(
        {
            "stop_reason": stop_reason,
            "iterations": len(trace.records),
            "grad_norm": ev.grad_x_norm,
            "f_value": problem.f_value(x),
            "feas": problem.feasibility(x),
            "x_final": x,
            "lambda_final": lam,
        }
    )
    return trace
