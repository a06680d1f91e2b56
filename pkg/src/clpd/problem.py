"""Problem abstraction and deterministic instance generators.

A :class:`Problem` bundles oracles for a smooth convex objective ``f`` and a
linear equality constraint ``Ax = b`` (``dim_dual = 0`` means unconstrained).
Two generator families cover the benchmark suite: an equality-constrained
quadratic with a planted sparse solution, and a sparse least-squares fit.
Both are pure functions of their parameters and an :class:`RngSpec`, so the
same seed reproduces the same instance byte for byte.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .errors import (
    InvalidDimensionError,
    InvalidParameterError,
    NoSaddlePointError,
    UnsupportedProblemError,
)

RNG_ALGORITHM = "philox"  # fixed repo-wide: splittable, counter-based


@dataclass(frozen=True)
class RngSpec:
    """Seed plus the fixed generator algorithm tag."""

    seed: int
    algorithm: str = RNG_ALGORITHM

    def __post_init__(self):
        if not (0 <= int(self.seed) < 2**64):
            raise InvalidParameterError("seed must be a 64-bit unsigned integer")
        if self.algorithm != RNG_ALGORITHM:
            raise InvalidParameterError(
                f"unknown rng algorithm {self.algorithm!r}; this repo pins {RNG_ALGORITHM!r}"
            )

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(int(self.seed)))


@dataclass(frozen=True)
class QuadraticForm:
    """f(x) = 1/2 x'Qx + c'x + r, with Q either dense or a scaled identity.

    The scaled-identity representation is never materialized; solvers add
    ``scale`` to diagonals directly, which keeps n = 2000 instances cheap.
    """

    linear: np.ndarray
    constant: float = 0.0
    scale: Optional[float] = None  # Q = scale * I
    matrix: Optional[np.ndarray] = None  # dense Q

    def __post_init__(self):
        if (self.scale is None) == (self.matrix is None):
            raise InvalidParameterError("exactly one of scale/matrix must be given")

    def matvec(self, x: np.ndarray) -> np.ndarray:
        if self.scale is not None:
            return self.scale * x
        return self.matrix @ x

    def grad(self, x: np.ndarray) -> np.ndarray:
        return self.matvec(x) + self.linear

    def value(self, x: np.ndarray) -> float:
        return 0.5 * float(x @ self.matvec(x)) + float(self.linear @ x) + self.constant

    def add_to(self, dense: np.ndarray) -> None:
        """Accumulate Q into a preallocated dense matrix, in place."""
        n = dense.shape[0]
        if self.scale is not None:
            dense.flat[:: n + 1] += self.scale
        else:
            dense += self.matrix


@dataclass(frozen=True)
class Problem:
    """Oracle bundle for min f(x) s.t. Ax = b.

    ``constraint_dense`` is populated by the generators; hand-built problems
    may supply only the matvec/adjoint pair. ``meta`` carries the generator
    name, parameters, and seed so traces and serialized files are
    self-describing; ``planted`` keeps the constructed feasible point, when
    one exists.
    """

    dim_primal: int
    dim_dual: int
    f_value: Callable[[np.ndarray], float]
    f_grad: Callable[[np.ndarray], np.ndarray]
    constraint_matvec: Callable[[np.ndarray], np.ndarray]
    constraint_adjoint: Callable[[np.ndarray], np.ndarray]
    rhs_b: np.ndarray
    quadratic_form: Optional[QuadraticForm] = None
    constraint_dense: Optional[np.ndarray] = None
    lipschitz_hint: Optional[float] = None
    planted: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim_primal < 1:
            raise InvalidDimensionError("dim_primal must be >= 1")
        if self.dim_dual < 0:
            raise InvalidDimensionError("dim_dual must be >= 0")
        if self.rhs_b.shape != (self.dim_dual,):
            raise InvalidDimensionError("rhs_b length must equal dim_dual")

    def feasibility(self, x: np.ndarray) -> float:
        """||Ax - b||, zero for unconstrained problems."""
        if self.dim_dual == 0:
            return 0.0
        return float(np.linalg.norm(self.constraint_matvec(x) - self.rhs_b))


@dataclass(frozen=True)
class SaddlePoint:
    """Certified stationary pair: grad f(x*) + A'lam* = 0 and Ax* = b."""

    x_star: np.ndarray
    lambda_star: np.ndarray
    kkt_residual: float


def _unconstrained_oracles(n: int):
    empty = np.zeros(0)

    def matvec(x):
        return empty

    def adjoint(lam):
        return np.zeros(n)

    return matvec, adjoint


def _dense_oracles(a_mat: np.ndarray):
    def matvec(x):
        return a_mat @ x

    def adjoint(lam):
        return a_mat.T @ lam

    return matvec, adjoint


def gen_equality_qp(n: int, m: int, mu: float, rng: RngSpec) -> Problem:
    """Equality-constrained quadratic: min (mu/2)||x||^2 s.t. Ax = b.

    A is i.i.d. standard normal. The planted solution draws from N(0, 4),
    is clipped to [-2, 2], then sparsified so that exactly ceil(0.01 n)
    entries survive (support chosen uniformly without replacement);
    b = A @ planted, so the planted point is feasible by construction.
    """
    if n < 1 or m < 1:
        raise InvalidDimensionError("gen_equality_qp needs n >= 1 and m >= 1")
    if mu < 0:
        raise InvalidParameterError("mu must be nonnegative")
    gen = rng.generator()
    a_mat = gen.standard_normal((m, n))
    raw = gen.normal(0.0, 2.0, size=n)
    clipped = np.clip(raw, -2.0, 2.0)
    keep = math.ceil(0.01 * n)
    support = gen.choice(n, size=keep, replace=False)
    planted = np.zeros(n)
    planted[support] = clipped[support]
    b = a_mat @ planted

    mu = float(mu)

    def f_value(x):
        return 0.5 * mu * float(x @ x)

    def f_grad(x):
        return mu * x

    matvec, adjoint = _dense_oracles(a_mat)
    return Problem(
        dim_primal=n,
        dim_dual=m,
        f_value=f_value,
        f_grad=f_grad,
        constraint_matvec=matvec,
        constraint_adjoint=adjoint,
        rhs_b=b,
        quadratic_form=QuadraticForm(linear=np.zeros(n), constant=0.0, scale=mu),
        constraint_dense=a_mat,
        lipschitz_hint=mu,
        planted=planted,
        meta={
            "generator": "equality_qp",
            "n": n,
            "m": m,
            "mu": mu,
            "seed": int(rng.seed),
        },
    )


def gen_least_squares(m: int, n: int, density: float, rng: RngSpec) -> Problem:
    """Unconstrained least squares: min 0.5||Ax - b||^2 with sparse-ish A.

    A (m x n) gets round(density * m * n) nonzeros, i.i.d. uniform on
    [0, 0.1], at positions chosen uniformly without replacement; b is
    i.i.d. uniform on [0, 1]. The returned problem has dim_dual = 0 and a
    dense quadratic form (A'A, -A'b, ||b||^2 / 2).
    """
    if m < 1 or n < 1:
        raise InvalidDimensionError("gen_least_squares needs m >= 1 and n >= 1")
    if not (0.0 < density <= 1.0):
        raise InvalidParameterError("density must lie in (0, 1]")
    gen = rng.generator()
    nnz = int(round(density * m * n))
    a_mat = np.zeros((m, n))
    positions = gen.choice(m * n, size=nnz, replace=False)
    a_mat.flat[positions] = gen.uniform(0.0, 0.1, size=nnz)
    b = gen.uniform(0.0, 1.0, size=m)

    def f_value(x):
        r = a_mat @ x - b
        return 0.5 * float(r @ r)

    def f_grad(x):
        return a_mat.T @ (a_mat @ x - b)

    matvec, adjoint = _unconstrained_oracles(n)
    return Problem(
        dim_primal=n,
        dim_dual=0,
        f_value=f_value,
        f_grad=f_grad,
        constraint_matvec=matvec,
        constraint_adjoint=adjoint,
        rhs_b=np.zeros(0),
        quadratic_form=QuadraticForm(
            linear=-(a_mat.T @ b),
            constant=0.5 * float(b @ b),
            matrix=a_mat.T @ a_mat,
        ),
        lipschitz_hint=None,
        meta={
            "generator": "least_squares",
            "m": m,
            "n": n,
            "density": float(density),
            "seed": int(rng.seed),
            "data_matrix": a_mat,
            "data_rhs": b,
        },
    )


def min_norm_least_squares(a_mat: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minimum-norm minimizer of ||Ax - b|| (pseudo-inverse solution)."""
    a_mat = np.asarray(a_mat, dtype=float)
    b = np.asarray(b, dtype=float)
    if a_mat.ndim != 2 or b.shape != (a_mat.shape[0],):
        raise InvalidDimensionError("A must be 2-d with rows matching len(b)")
    if not np.any(a_mat):
        raise InvalidParameterError("A must be nonzero")
    x, *_ = np.linalg.lstsq(a_mat, b, rcond=None)
    return x


def solve_kkt_saddle(problem: Problem) -> SaddlePoint:
    """Reference saddle point from the stationarity system.

    Solves [[Q, A'], [A, 0]] (x, lam) = (-c, b) directly; singular but
    consistent systems fall back to a least-squares solve. Unconstrained
    problems solve Qx = -c, using damped normal equations (damping 1e-12)
    when Q is singular so the minimum-norm solution survives.
    """
    quad = problem.quadratic_form
    if quad is None:
        raise UnsupportedProblemError("saddle solve needs an explicit quadratic form")
    n, m = problem.dim_primal, problem.dim_dual
    c = quad.linear

    if m == 0:
        x = _solve_psd_min_norm(quad, n)
        lam = np.zeros(0)
        residual = float(np.linalg.norm(problem.f_grad(x)))
        tol = 1e-8 * (1.0 + float(np.linalg.norm(c)))
        if not np.isfinite(residual) or residual > tol:
            raise NoSaddlePointError(
                f"stationarity residual {residual:.3e} exceeds {tol:.3e}"
            )
        return SaddlePoint(x_star=x, lambda_star=lam, kkt_residual=residual)

    if problem.constraint_dense is None:
        raise UnsupportedProblemError("saddle solve needs a dense constraint matrix")
    a_mat = problem.constraint_dense
    kkt = np.zeros((n + m, n + m))
    quad.add_to(kkt[:n, :n])
    kkt[n:, :n] = a_mat
    kkt[:n, n:] = a_mat.T
    rhs = np.concatenate([-c, problem.rhs_b])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
    x, lam = sol[:n], sol[n:]
    residual = max(
        float(np.linalg.norm(problem.f_grad(x) + problem.constraint_adjoint(lam))),
        float(np.linalg.norm(a_mat @ x - problem.rhs_b)),
    )
    tol = 1e-8 * (1.0 + float(np.linalg.norm(problem.rhs_b)))
    if not np.isfinite(residual) or residual > tol:
        # One more try: minimum-norm KKT solution for singular-but-consistent systems.
        sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
        x, lam = sol[:n], sol[n:]
        residual = max(
            float(np.linalg.norm(problem.f_grad(x) + problem.constraint_adjoint(lam))),
            float(np.linalg.norm(a_mat @ x - problem.rhs_b)),
        )
        if not np.isfinite(residual) or residual > tol:
            raise NoSaddlePointError(
                f"KKT residual {residual:.3e} exceeds {tol:.3e}: system inconsistent"
            )
    return SaddlePoint(x_star=x, lambda_star=lam, kkt_residual=residual)


def _solve_psd_min_norm(quad: QuadraticForm, n: int) -> np.ndarray:
    """Solve Qx = -c for PSD Q; damped normal equations if Q is singular.

    The damping 1e-12 is relative to ||Q||_F^2 so it dominates the rounding
    noise in the numerically-null eigenvalues of Q^2; iterated Tikhonov
    refinement then removes the bias on the range components while the
    null-space components stay at zero, which is the minimum-norm solution.
    """
    c = quad.linear
    if quad.scale is not None:
        if quad.scale > 0.0:
            return -c / quad.scale
        if np.linalg.norm(c) == 0.0:
            return np.zeros(n)
        raise NoSaddlePointError("Qx = -c is inconsistent for Q = 0, c != 0")
    # A plain LU solve is unusable here: on a singular Q it can "succeed"
    # with an arbitrary null-space component that the residual cannot see.
    q_mat = quad.matrix
    gram = q_mat.T @ q_mat
    damping = 1e-12 * max(1.0, float(np.sum(gram.flat[:: n + 1])))  # trace = ||Q||_F^2
    gram.flat[:: n + 1] += damping
    rhs = -(q_mat.T @ c)
    factor = scipy.linalg.cho_factor(gram, check_finite=False)
    x = scipy.linalg.cho_solve(factor, rhs, check_finite=False)
    best, best_res = x, float(np.linalg.norm(q_mat @ x + c))
    for _ in range(20):
        # Iterated Tikhonov against the undamped normal equations.
        x = x + scipy.linalg.cho_solve(
            factor, rhs - (q_mat.T @ (q_mat @ x)), check_finite=False
        )
        res = float(np.linalg.norm(q_mat @ x + c))
        if res < best_res:
            best, best_res = x, res
        else:
            break
    return best


# --- serialization ---------------------------------------------------------

_FORMAT_HEADER = "# clpd problem v1"


def _write_matrix(lines: list, name: str, mat: np.ndarray) -> None:
    mat = np.atleast_2d(mat)
    lines.append(f"[matrix {name} {mat.shape[0]} {mat.shape[1]}]")
    for row in mat:
        lines.append(" ".join(repr(float(v)) for v in row))


def _write_vector(lines: list, name: str, vec: np.ndarray) -> None:
    lines.append(f"[vector {name} {vec.shape[0]}]")
    lines.append(" ".join(repr(float(v)) for v in vec))


def save_problem(problem: Problem, path) -> None:
    """Write a problem as self-describing structured text.

    Header lines carry the generator name, parameters, and seed; matrix and
    vector blocks carry the dense data row-major in round-trip decimal form.
    """
    lines = [_FORMAT_HEADER]
    meta = {k: v for k, v in problem.meta.items() if not isinstance(v, np.ndarray)}
    for key in sorted(meta):
        lines.append(f"{key} = {meta[key]}")
    lines.append(f"dim_primal = {problem.dim_primal}")
    lines.append(f"dim_dual = {problem.dim_dual}")
    if problem.lipschitz_hint is not None:
        lines.append(f"lipschitz_hint = {problem.lipschitz_hint!r}")
    quad = problem.quadratic_form
    if "data_matrix" in problem.meta:
        _write_matrix(lines, "data_A", problem.meta["data_matrix"])
        _write_vector(lines, "data_b", problem.meta["data_rhs"])
    elif quad is not None:
        lines.append(f"quad_constant = {quad.constant!r}")
        if quad.scale is not None:
            lines.append(f"quad_scale = {quad.scale!r}")
        else:
            _write_matrix(lines, "Q", quad.matrix)
        _write_vector(lines, "c", quad.linear)
    else:
        raise UnsupportedProblemError(
            "only problems with a quadratic form or data matrix serialize"
        )
    if problem.dim_dual > 0:
        if problem.constraint_dense is None:
            raise UnsupportedProblemError("serialization needs a dense constraint")
        _write_matrix(lines, "A", problem.constraint_dense)
        _write_vector(lines, "b", problem.rhs_b)
    if problem.planted is not None:
        _write_vector(lines, "planted", problem.planted)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_problem(path) -> Problem:
    """Rebuild a problem from its serialized text form."""
    with open(path) as fh:
        raw = fh.read().splitlines()
    if not raw or raw[0] != _FORMAT_HEADER:
        raise InvalidParameterError(f"{path}: not a clpd problem file")
    scalars: dict = {}
    matrices: dict = {}
    vectors: dict = {}
    i = 1
    while i < len(raw):
        line = raw[i].strip()
        i += 1
        if not line or line.startswith("#"):
            continue
        if line.startswith("[matrix "):
            name, rows, cols = line[len("[matrix ") : -1].split()
            rows, cols = int(rows), int(cols)
            block = [_parse_floats(raw[i + j]) for j in range(rows)]
            i += rows
            matrices[name] = np.vstack(block).reshape(rows, cols)
        elif line.startswith("[vector "):
            name, length = line[len("[vector ") : -1].split()
            vectors[name] = _parse_floats(raw[i])
            if vectors[name].shape[0] != int(length):
                raise InvalidParameterError(f"{path}: vector {name} length mismatch")
            i += 1
        elif "=" in line:
            key, _, value = line.partition("=")
            scalars[key.strip()] = value.strip()
        else:
            raise InvalidParameterError(f"{path}: unparseable line {line!r}")

    n = int(scalars["dim_primal"])
    m = int(scalars["dim_dual"])
    hint = float(scalars["lipschitz_hint"]) if "lipschitz_hint" in scalars else None
    meta = {
        k: _coerce(v)
        for k, v in scalars.items()
        if k not in ("dim_primal", "dim_dual", "lipschitz_hint")
    }

    if "data_A" in matrices:
        a_data = matrices["data_A"]
        b_data = vectors["data_b"]

        def f_value(x, a=a_data, b=b_data):
            r = a @ x - b
            return 0.5 * float(r @ r)

        def f_grad(x, a=a_data, b=b_data):
            return a.T @ (a @ x - b)

        quad = QuadraticForm(
            linear=-(a_data.T @ b_data),
            constant=0.5 * float(b_data @ b_data),
            matrix=a_data.T @ a_data,
        )
        meta["data_matrix"] = a_data
        meta["data_rhs"] = b_data
    else:
        constant = float(scalars.get("quad_constant", "0.0"))
        if "quad_scale" in scalars:
            quad = QuadraticForm(
                linear=vectors["c"], constant=constant, scale=float(scalars["quad_scale"])
            )
        else:
            quad = QuadraticForm(linear=vectors["c"], constant=constant, matrix=matrices["Q"])
        f_value = quad.value
        f_grad = quad.grad

    if m > 0:
        a_mat = matrices["A"]
        rhs = vectors["b"]
        matvec, adjoint = _dense_oracles(a_mat)
    else:
        a_mat, rhs = None, np.zeros(0)
        matvec, adjoint = _unconstrained_oracles(n)

    return Problem(
        dim_primal=n,
        dim_dual=m,
        f_value=f_value,
        f_grad=f_grad,
        constraint_matvec=matvec,
        constraint_adjoint=adjoint,
        rhs_b=rhs,
        quadratic_form=quad,
        constraint_dense=a_mat,
        lipschitz_hint=hint,
        planted=vectors.get("planted"),
        meta=meta,
    )


def _parse_floats(line: str) -> np.ndarray:
    return np.array([float(tok) for tok in line.split()], dtype=float)


def _coerce(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text
