"""Closed-loop primal-dual flow in first-order form.

State (x, v, lam, tau) evolves as

    v'   = -tau' grad_x L(x, lam)
    x'   = -(tau'/tau) (x - v) - (tau'^2/tau) grad_x L(x, lam)
    lam' =  tau' (A (x + (tau/tau') x') - b)
    tau' =  tau^((q-1)/q) mu^(1/q),     mu^p ||grad_x L||^(p-1) = 1,

integrated by an embedded Cash-Karp 5(4) pair with per-step error control
on the full state. No Hessian of f is ever evaluated: the first-order form
absorbs the gradient-correction damping of the underlying second-order
system. With q = p = 1 the feedback disappears (mu = 1, tau = t).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidParameterError, InvalidStateError, StiffnessError
from .lagrangian import eval_lagrangian, saddle_value
from .problem import Problem, SaddlePoint
from .trace import OdeSample, TrajectoryRecord


class StationarityEvent(Exception):
    """Raised when the trajectory reaches a critical point of the Lagrangian."""


@dataclass(frozen=True)
class OdeParams:
    q: float = 1.0
    p: float = 1.0
    t0: float = 1.0
    t_end: float = 51.0
    rtol: float = 1e-9
    atol: float = 1e-12
    max_step: float = math.inf
    mu_cap: float = 1e12  # keeps the integrator finite as grad_x L -> 0
    saturation_steps: int = 10

    def __post_init__(self):
        if self.q < 1.0 or self.p < 1.0:
            raise InvalidParameterError("q and p must both be >= 1")
        if self.t0 <= 0.0 or self.t_end <= self.t0:
            raise InvalidParameterError("need 0 < t0 < t_end")
        if self.rtol <= 0.0 or self.atol < 0.0 or self.mu_cap <= 0.0:
            raise InvalidParameterError("tolerances and mu_cap must be positive")

    def tau_initial(self) -> float:
        # Closed form tau(t) = (t0 + int mu^(1/q))^q / q^q evaluated at t0.
        return self.t0**self.q / self.q**self.q


@dataclass
class OdeState:
    t: float
    x: np.ndarray
    v: np.ndarray
    lam: np.ndarray
    tau: float


def initial_state(
    problem: Problem,
    params: OdeParams,
    x0: Optional[np.ndarray] = None,
    lam0: Optional[np.ndarray] = None,
    v0: Optional[np.ndarray] = None,
) -> OdeState:
    """Default start: x = 0, v = x (zero initial velocity term), lam = 0."""
    n, m = problem.dim_primal, problem.dim_dual
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    v = x.copy() if v0 is None else np.array(v0, dtype=float)
    lam = np.zeros(m) if lam0 is None else np.array(lam0, dtype=float)
    return OdeState(t=params.t0, x=x, v=v, lam=lam, tau=params.tau_initial())


def closed_loop_mu(grad_norm: float, p: float, mu_cap: float = 1e12) -> float:
    """Feedback scalar min(grad_norm^(-(p-1)/p), mu_cap)."""
    if grad_norm <= 0.0:
        raise StationarityEvent("grad_x L vanished; mu is undefined")
    if p < 1.0:
        raise InvalidParameterError("p must be >= 1")
    return min(grad_norm ** (-(p - 1.0) / p), mu_cap)


def tau_dot(tau: float, mu: float, q: float) -> float:
    """Time-scaling speed tau^((q-1)/q) mu^(1/q); equals mu when q = 1."""
    if tau <= 0.0:
        raise InvalidStateError("tau must stay positive")
    return tau ** ((q - 1.0) / q) * mu ** (1.0 / q)


@dataclass(frozen=True)
class OdeDerivative:
    dx: np.ndarray
    dv: np.ndarray
    dlam: np.ndarray
    dtau: float
    mu: float
    grad_norm: float


def rhs(state: OdeState, params: OdeParams, problem: Problem) -> OdeDerivative:
    """Time derivative of the packed state at one point."""
    if state.tau <= 0.0:
        raise InvalidStateError(f"tau = {state.tau} is not positive")
    ev = eval_lagrangian(problem, state.x, state.lam)
    mu = closed_loop_mu(ev.grad_x_norm, params.p, params.mu_cap)
    td = tau_dot(state.tau, mu, params.q)
    dv = -td * ev.grad_x
    dx = -(td / state.tau) * (state.x - state.v) - (td * td / state.tau) * ev.grad_x
    if problem.dim_dual > 0:
        # lam' uses the freshly computed x', never a finite difference.
        probe = state.x + (state.tau / td) * dx
        dlam = td * (problem.constraint_matvec(probe) - problem.rhs_b)
    else:
        dlam = np.zeros(0)
    return OdeDerivative(dx=dx, dv=dv, dlam=dlam, dtau=td, mu=mu, grad_norm=ev.grad_x_norm)


# Cash-Karp 5(4) tableau.
_CK_C = (0.0, 1 / 5, 3 / 10, 3 / 5, 1.0, 7 / 8)
_CK_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (3 / 10, -9 / 10, 6 / 5),
    (-11 / 54, 5 / 2, -70 / 27, 35 / 27),
    (1631 / 55296, 175 / 512, 575 / 13824, 44275 / 110592, 253 / 4096),
)
_CK_B5 = (37 / 378, 0.0, 250 / 621, 125 / 594, 0.0, 512 / 1771)
_CK_ERR = (-277 / 64512, 0.0, 6925 / 370944, -6925 / 202752, -277 / 14336, 277 / 7084)


def _pack(state: OdeState) -> np.ndarray:
    return np.concatenate([state.x, state.v, state.lam, [state.tau]])


def _unpack(t: float, y: np.ndarray, n: int, m: int) -> OdeState:
    return OdeState(t=t, x=y[:n], v=y[n : 2 * n], lam=y[2 * n : 2 * n + m], tau=float(y[-1]))


def integrate(
    problem: Problem,
    init: OdeState,
    params: OdeParams,
    saddle: Optional[SaddlePoint] = None,
    keep_states: bool = False,
) -> TrajectoryRecord:
    """Integrate from t0 until t_end, a stationarity event, or mu saturation.

    Samples are taken at every accepted step. With a saddle certificate the
    energy E(t) = tau (L(x,lam*) - L*) + ||v - x*||^2/2 + ||lam - lam*||^2/2
    is recorded alongside the residuals. ``keep_states`` additionally stores
    the full state at each accept point under ``final["states"]``.
    """
    if init.t != params.t0:
        raise InvalidParameterError("initial state must start at t0")
    n, m = problem.dim_primal, problem.dim_dual

    l_star = f_star = None
    if saddle is not None:
        l_star = saddle_value(problem, saddle)
        f_star = problem.f_value(saddle.x_star)

    header = {"kind": "ode", "q": params.q, "p": params.p, "t0": params.t0,
              "t_end": params.t_end, "rtol": params.rtol, "atol": params.atol,
              "mu_cap": params.mu_cap}
    for key, value in problem.meta.items():
        if not isinstance(value, np.ndarray):
            header[f"problem_{key}"] = value
    if f_star is not None:
        header["f_star"] = f_star
    traj = TrajectoryRecord(header=header)

    def f_packed(y: np.ndarray) -> np.ndarray:
        d = rhs(_unpack(0.0, y, n, m), params, problem)
        return np.concatenate([d.dx, d.dv, d.dlam, [d.dtau]])

    def sample(t: float, y: np.ndarray) -> OdeSample:
        state = _unpack(t, y, n, m)
        ev = eval_lagrangian(problem, state.x, state.lam)
        mu = closed_loop_mu(ev.grad_x_norm, params.p, params.mu_cap)
        td = tau_dot(state.tau, mu, params.q)
        fx = problem.f_value(state.x)
        feas = float(np.linalg.norm(ev.grad_lambda)) if m else 0.0
        pd = energy = None
        if saddle is not None:
            l_x = fx + (float(saddle.lambda_star @ ev.grad_lambda) if m else 0.0)
            gap = l_x - l_star
            pd = max(gap, 0.0)
            dv = state.v - saddle.x_star
            dl = state.lam - saddle.lambda_star
            energy = state.tau * gap + 0.5 * float(dv @ dv) + 0.5 * float(dl @ dl)
        return OdeSample(
            t=t, grad_norm=ev.grad_x_norm, f_value=fx, feas=feas,
            mu=mu, tau=state.tau, tau_dot=td, pd_gap=pd, energy=energy,
        )

    t = params.t0
    y = _pack(init)
    states = [] if keep_states else None
    try:
        f_now = f_packed(y)
        first = sample(t, y)
    except StationarityEvent:
        traj.final.update({"stop_reason": "stationarity", "t_final": t, "steps": 0})
        return traj
    traj.samples.append(first)
    if states is not None:
        states.append(_unpack(t, y.copy(), n, m))
    grad_floor = 1e-13 * (1.0 + first.grad_norm)

    # Conservative first step from the local derivative scale.
    scale = params.atol + params.rtol * np.abs(y)
    d0 = math.sqrt(float(np.mean((y / scale) ** 2)))
    d1 = math.sqrt(float(np.mean((f_now / scale) ** 2)))
    h = 0.01 * d0 / d1 if d1 > 0 else 1e-6
    h = min(h, params.max_step, params.t_end - t)

    ks = [np.zeros_like(y) for _ in range(6)]
    saturated = 0
    steps = 0
    stop_reason = "t_end"
    while t < params.t_end:
        h = min(h, params.max_step, params.t_end - t)
        if h < 1e-14 * max(1.0, abs(t)):
            raise StiffnessError(
                f"step size underflow at t = {t}",
                last_state=_unpack(t, y, n, m),
                trajectory=traj,
            )
        # Guard against landing one ulp short of the horizon.
        reaches_end = t + h >= params.t_end - 1e-12 * max(1.0, abs(params.t_end))
        try:
            ks[0] = f_now
            for i in range(1, 6):
                yi = y + h * sum(a * ks[j] for j, a in enumerate(_CK_A[i]))
                ks[i] = f_packed(yi)
            y5 = y + h * sum(b * k for b, k in zip(_CK_B5, ks) if b != 0.0)
            err_vec = h * sum(e * k for e, k in zip(_CK_ERR, ks) if e != 0.0)
        except StationarityEvent:
            # A stage touched a critical point: the trajectory has converged
            # beyond what the feedback law can represent.
            stop_reason = "stationarity"
            break
        scale = params.atol + params.rtol * np.maximum(np.abs(y), np.abs(y5))
        err = math.sqrt(float(np.mean((err_vec / scale) ** 2)))
        if err <= 1.0:
            t = params.t_end if reaches_end else t + h
            y = y5
            steps += 1
            try:
                f_now = f_packed(y)
                rec = sample(t, y)
            except StationarityEvent:
                stop_reason = "stationarity"
                break
            traj.samples.append(rec)
            if states is not None:
                states.append(_unpack(t, y.copy(), n, m))
            if rec.grad_norm <= grad_floor:
                stop_reason = "stationarity"
                break
            if rec.mu >= params.mu_cap:
                saturated += 1
                if saturated >= params.saturation_steps:
                    stop_reason = "saturation"
                    break
            else:
                saturated = 0
        factor = 0.9 * err ** -0.2 if err > 0 else 5.0
        h *= min(5.0, max(0.2, factor))

    traj.final.update(
        {
            "stop_reason": stop_reason,
            "t_final": traj.samples[-1].t if traj.samples else t,
            "steps": steps,
        }
    )
    if states is not None:
        traj.final["states"] = states
    return traj
