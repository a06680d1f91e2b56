import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clpd.errors import InvalidDimensionError, SaddleCertificateError
from clpd.lagrangian import eval_lagrangian, pd_gap
from clpd.problem import RngSpec, SaddlePoint, gen_equality_qp, solve_kkt_saddle

from conftest import make_quadratic_problem


def _strip_problem():
    # f = 0.75 ||x||^2, A = [1 0], b = 0.
    return make_quadratic_problem(
        1.5 * np.eye(2),
        np.zeros(2),
        m=1,
        a_mat=np.array([[1.0, 0.0]]),
        b=np.zeros(1),
    )


def test_hand_gradient():
    ev = eval_lagrangian(_strip_problem(), np.array([1.0, 0.0]), np.array([2.0]))
    assert np.allclose(ev.grad_x, [3.5, 0.0], atol=1e-15)
    assert np.allclose(ev.grad_lambda, [1.0], atol=1e-15)
    assert ev.value == pytest.approx(0.75 + 2.0)


def test_stationary_at_saddle(qp10, qp10_saddle):
    ev = eval_lagrangian(qp10, qp10_saddle.x_star, qp10_saddle.lambda_star)
    assert ev.grad_x_norm <= 1e-8 * (1.0 + np.linalg.norm(qp10.rhs_b))


def test_unconstrained_degeneration():
    prob = make_quadratic_problem(np.eye(3), np.array([1.0, 0.0, -1.0]))
    x = np.array([0.5, 0.5, 0.5])
    ev = eval_lagrangian(prob, x, np.zeros(0))
    assert ev.grad_lambda.shape == (0,)
    assert ev.value == prob.f_value(x)
    assert np.array_equal(ev.grad_x, prob.f_grad(x))


def test_grad_norm_matches(qp10):
    rng = np.random.default_rng(1)
    x, lam = rng.standard_normal(10), rng.standard_normal(10)
    ev = eval_lagrangian(qp10, x, lam)
    assert abs(ev.grad_x_norm - np.linalg.norm(ev.grad_x)) <= 1e-15 * (
        1.0 + ev.grad_x_norm
    )


def test_dimension_mismatch():
    prob = _strip_problem()
    with pytest.raises(InvalidDimensionError):
        eval_lagrangian(prob, np.zeros(3), np.zeros(1))
    with pytest.raises(InvalidDimensionError):
        eval_lagrangian(prob, np.zeros(2), np.zeros(2))


@settings(max_examples=30, deadline=None)
@given(
    scale=st.floats(0.1, 10.0),
    seed=st.integers(0, 50),
)
def test_affine_in_lambda(scale, seed):
    prob = gen_equality_qp(6, 3, 1.5, RngSpec(3))
    rng = np.random.default_rng(seed)
    x = scale * rng.standard_normal(6)
    l1, l2 = rng.standard_normal(3), rng.standard_normal(3)
    v12 = eval_lagrangian(prob, x, l1 + l2).value
    v1 = eval_lagrangian(prob, x, l1).value
    v2 = eval_lagrangian(prob, x, l2).value
    v0 = eval_lagrangian(prob, x, np.zeros(3)).value
    scale_ref = 1.0 + max(abs(v12), abs(v1), abs(v2), abs(v0))
    assert abs(v12 - v1 - v2 + v0) <= 1e-12 * scale_ref


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 50))
def test_gradient_decomposition(seed):
    prob = gen_equality_qp(6, 3, 1.5, RngSpec(4))
    rng = np.random.default_rng(seed)
    x, lam = rng.standard_normal(6), rng.standard_normal(3)
    with_lam = eval_lagrangian(prob, x, lam).grad_x
    without = eval_lagrangian(prob, x, np.zeros(3)).grad_x
    target = prob.constraint_adjoint(lam)
    assert np.linalg.norm(with_lam - without - target) <= 1e-12 * (
        1.0 + np.linalg.norm(target)
    )


def test_feasible_equivalence():
    prob = gen_equality_qp(8, 4, 1.5, RngSpec(5))
    x = prob.planted  # exactly feasible by construction
    rng = np.random.default_rng(0)
    fx = prob.f_value(x)
    for _ in range(5):
        lam = rng.standard_normal(4)
        assert eval_lagrangian(prob, x, lam).value == pytest.approx(fx, abs=1e-12)


class TestPdGap:
    def test_zero_at_saddle(self, qp10, qp10_saddle):
        assert pd_gap(qp10, qp10_saddle.x_star, qp10_saddle) == 0.0

    def test_unconstrained_direct_value(self):
        prob = make_quadratic_problem(np.eye(1), np.zeros(1))
        saddle = solve_kkt_saddle(prob)
        assert pd_gap(prob, np.array([3.0]), saddle) == pytest.approx(4.5, abs=1e-14)

    def test_feasible_point_gap_is_objective_difference(self):
        # On the feasible set the Lagrangian reduces to f, so the gap equals
        # f(x) - f(x*); brute-force both sides on feasible perturbations.
        prob = gen_equality_qp(6, 3, 1.5, RngSpec(6))
        saddle = solve_kkt_saddle(prob)
        a_mat = prob.constraint_dense
        _, _, vt = np.linalg.svd(a_mat)
        null_basis = vt[3:].T  # n - m null directions
        rng = np.random.default_rng(2)
        for _ in range(5):
            x = prob.planted + null_basis @ rng.standard_normal(3)
            expected = prob.f_value(x) - prob.f_value(saddle.x_star)
            got = pd_gap(prob, x, saddle)
            assert got == pytest.approx(expected, abs=1e-9 * (1 + abs(expected)))

    def test_invalid_certificate_raises(self):
        prob = make_quadratic_problem(np.eye(1), np.zeros(1))
        fake = SaddlePoint(
            x_star=np.array([1.0]), lambda_star=np.zeros(0), kkt_residual=0.0
        )
        with pytest.raises(SaddleCertificateError):
            pd_gap(prob, np.array([0.0]), fake)
