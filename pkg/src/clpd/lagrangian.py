"""Lagrangian evaluation kernel.

L(x, lam) = f(x) + <lam, Ax - b>. Every solver and monitor in the package
funnels through :func:`eval_lagrangian`; :func:`pd_gap` measures
L(x, lam*) - L(x*, lam*) against a certified saddle point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidDimensionError, SaddleCertificateError
from .problem import Problem, SaddlePoint


@dataclass(frozen=True)
class LagrangianEval:
    value: float
    grad_x: np.ndarray
    grad_lambda: np.ndarray
    grad_x_norm: float


def eval_lagrangian(problem: Problem, x: np.ndarray, lam: np.ndarray) -> LagrangianEval:
    """Value and both partial gradients of L at (x, lam).

    grad_x = grad f(x) + A'lam and grad_lambda = Ax - b; for dim_dual = 0
    the lam argument must be empty and the value reduces to f(x).
    """
    if x.shape != (problem.dim_primal,):
        raise InvalidDimensionError(
            f"x has shape {x.shape}, expected ({problem.dim_primal},)"
        )
    if lam.shape != (problem.dim_dual,):
        raise InvalidDimensionError(
            f"lambda has shape {lam.shape}, expected ({problem.dim_dual},)"
        )
    fx = problem.f_value(x)
    gx = problem.f_grad(x)
    if problem.dim_dual == 0:
        grad_x = gx
        grad_lambda = np.zeros(0)
        value = fx
    else:
        residual = problem.constraint_matvec(x) - problem.rhs_b
        grad_x = gx + problem.constraint_adjoint(lam)
        grad_lambda = residual
        value = fx + float(lam @ residual)
    return LagrangianEval(
        value=float(value),
        grad_x=grad_x,
        grad_lambda=grad_lambda,
        grad_x_norm=float(np.linalg.norm(grad_x)),
    )


def saddle_value(problem: Problem, saddle: SaddlePoint) -> float:
    """L(x*, lam*), which equals f(x*) up to the saddle's feasibility error."""
    return eval_lagrangian(problem, saddle.x_star, saddle.lambda_star).value


def pd_gap(problem: Problem, x: np.ndarray, saddle: SaddlePoint) -> float:
    """L(x, lam*) - L(x*, lam*), clamped to zero within rounding.

    The gap is provably nonnegative at a true saddle, so a negative value
    beyond 1e-12 of scale invalidates the certificate rather than being
    silently clamped: every downstream rate check depends on it.
    """
    l_star = saddle_value(problem, saddle)
    l_x = eval_lagrangian(problem, x, saddle.lambda_star).value
    gap = l_x - l_star
    scale = 1.0 + abs(l_star)
    if gap < -1e-12 * scale:
        raise SaddleCertificateError(
            f"primal-dual gap {gap:.3e} below -1e-12*(1+|L*|); saddle certificate invalid"
        )
    return max(gap, 0.0)
