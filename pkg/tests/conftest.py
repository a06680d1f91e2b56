import numpy as np
import pytest

from clpd.problem import (
    Problem,
    QuadraticForm,
    RngSpec,
    gen_equality_qp,
    solve_kkt_saddle,
)


@pytest.fixture(scope="session")
def qp10():
    """Reference constrained-quadratic instance (n = m = 10, mu = 1.5)."""
    return gen_equality_qp(10, 10, 1.5, RngSpec(42))


@pytest.fixture(scope="session")
def qp10_saddle(qp10):
    return solve_kkt_saddle(qp10)


@pytest.fixture(scope="session")
def qp2():
    """Tiny 2x2 instance for ODE runs."""
    return gen_equality_qp(2, 2, 1.5, RngSpec(11))


@pytest.fixture(scope="session")
def qp2_saddle(qp2):
    return solve_kkt_saddle(qp2)


def make_quadratic_problem(q_mat, c, m=0, a_mat=None, b=None, r=0.0):
    """Hand-built dense quadratic problem for unit tests."""
    n = q_mat.shape[0]
    quad = QuadraticForm(linear=c, constant=r, matrix=q_mat)
    if m == 0:
        return Problem(
            dim_primal=n,
            dim_dual=0,
            f_value=quad.value,
            f_grad=quad.grad,
            constraint_matvec=lambda x: np.zeros(0),
            constraint_adjoint=lambda lam: np.zeros(n),
            rhs_b=np.zeros(0),
            quadratic_form=quad,
        )
    return Problem(
        dim_primal=n,
        dim_dual=m,
        f_value=quad.value,
        f_grad=quad.grad,
        constraint_matvec=lambda x: a_mat @ x,
        constraint_adjoint=lambda lam: a_mat.T @ lam,
        rhs_b=b,
        quadratic_form=quad,
        constraint_dense=a_mat,
    )
