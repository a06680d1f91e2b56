import math

import numpy as np
import pytest

from clpd.errors import (
    InvalidDimensionError,
    InvalidParameterError,
    NoSaddlePointError,
    UnsupportedProblemError,
)
from clpd.problem import (
    Problem,
    QuadraticForm,
    RngSpec,
    gen_equality_qp,
    gen_least_squares,
    load_problem,
    min_norm_least_squares,
    save_problem,
    solve_kkt_saddle,
)

from conftest import make_quadratic_problem


class TestRngSpec:
    def test_rejects_bad_seed(self):
        with pytest.raises(InvalidParameterError):
            RngSpec(-1)
        with pytest.raises(InvalidParameterError):
            RngSpec(2**64)

    def test_rejects_unknown_algorithm(self):
        with pytest.raises(InvalidParameterError):
            RngSpec(1, algorithm="mt19937")

    def test_same_seed_same_stream(self):
        a = RngSpec(7).generator().standard_normal(16)
        b = RngSpec(7).generator().standard_normal(16)
        assert np.array_equal(a, b)


class TestGenEqualityQp:
    def test_planted_sparsity_and_clip(self):
        prob = gen_equality_qp(10, 10, 1.5, RngSpec(5))
        assert np.count_nonzero(prob.planted) == 1  # ceil(0.01 * 10)
        nz = prob.planted[prob.planted != 0]
        assert np.all(np.abs(nz) <= 2.0)

    def test_sparsity_count_scales(self):
        prob = gen_equality_qp(250, 10, 1.5, RngSpec(5))
        assert np.count_nonzero(prob.planted) == math.ceil(0.01 * 250)

    def test_mu_zero_annihilates_objective(self):
        prob = gen_equality_qp(2, 2, 0.0, RngSpec(3))
        x = np.array([1.3, -0.4])
        assert prob.f_value(x) == 0.0
        assert np.array_equal(prob.f_grad(x), np.zeros(2))

    def test_determinism_bytes(self):
        a = gen_equality_qp(100, 100, 1.5, RngSpec(9))
        b = gen_equality_qp(100, 100, 1.5, RngSpec(9))
        assert a.constraint_dense.tobytes() == b.constraint_dense.tobytes()
        assert a.rhs_b.tobytes() == b.rhs_b.tobytes()

    def test_planted_point_exactly_feasible(self):
        prob = gen_equality_qp(40, 12, 1.5, RngSpec(2))
        assert np.array_equal(prob.constraint_dense @ prob.planted, prob.rhs_b)

    def test_rejects_bad_dims(self):
        with pytest.raises(InvalidDimensionError):
            gen_equality_qp(0, 3, 1.0, RngSpec(1))
        with pytest.raises(InvalidDimensionError):
            gen_equality_qp(3, 0, 1.0, RngSpec(1))


class TestGenLeastSquares:
    def test_nonzero_count(self):
        prob = gen_least_squares(500, 1000, 0.5, RngSpec(5))
        assert np.count_nonzero(prob.meta["data_matrix"]) == 250000
        assert prob.dim_dual == 0

    def test_dense_entries_in_range(self):
        prob = gen_least_squares(20, 30, 1.0, RngSpec(6))
        a_mat = prob.meta["data_matrix"]
        assert np.count_nonzero(a_mat) == 600
        assert np.all((a_mat >= 0.0) & (a_mat <= 0.1))
        assert np.all((prob.meta["data_rhs"] >= 0.0) & (prob.meta["data_rhs"] < 1.0))

    def test_gradient_at_zero(self):
        prob = gen_least_squares(2, 2, 1.0, RngSpec(8))
        a_mat, b = prob.meta["data_matrix"], prob.meta["data_rhs"]
        assert np.allclose(prob.f_grad(np.zeros(2)), -(a_mat.T @ b), rtol=0, atol=1e-15)

    def test_rejects_bad_density(self):
        for bad in (0.0, -0.2, 1.5):
            with pytest.raises(InvalidParameterError):
                gen_least_squares(5, 5, bad, RngSpec(1))


class TestOracleConsistency:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_adjoint_identity(self, seed):
        prob = gen_equality_qp(15, 7, 1.5, RngSpec(seed))
        rng = np.random.default_rng(seed)
        for _ in range(100):
            x = rng.standard_normal(15)
            lam = rng.standard_normal(7)
            lhs = float(prob.constraint_matvec(x) @ lam)
            rhs = float(x @ prob.constraint_adjoint(lam))
            assert abs(lhs - rhs) <= 1e-12 * (
                1.0 + np.linalg.norm(x) * np.linalg.norm(lam)
            )

    @pytest.mark.parametrize(
        "prob",
        [
            gen_equality_qp(12, 5, 1.5, RngSpec(1)),
            gen_least_squares(9, 12, 0.7, RngSpec(1)),
        ],
        ids=["equality_qp", "least_squares"],
    )
    def test_gradient_matches_finite_differences(self, prob):
        # Central-difference oracle, step scaled per coordinate.
        rng = np.random.default_rng(99)
        n = prob.dim_primal
        for _ in range(10):
            x = rng.standard_normal(n)
            grad = prob.f_grad(x)
            fd = np.zeros(n)
            for i in range(n):
                h = 1e-5 * max(1.0, abs(x[i]))
                e = np.zeros(n)
                e[i] = h
                fd[i] = (prob.f_value(x + e) - prob.f_value(x - e)) / (2 * h)
            assert np.linalg.norm(fd - grad) <= 1e-6 * (1.0 + np.linalg.norm(grad))

    def test_quadratic_form_matches_gradient(self):
        prob = gen_least_squares(8, 11, 0.6, RngSpec(4))
        rng = np.random.default_rng(0)
        quad = prob.quadratic_form
        for _ in range(20):
            x = rng.standard_normal(11)
            lhs = prob.f_grad(x)
            rhs = quad.matvec(x) + quad.linear
            assert np.linalg.norm(lhs - rhs) <= 1e-12 * (1.0 + np.linalg.norm(lhs))


class TestMinNormLeastSquares:
    def test_underdetermined_row(self):
        x = min_norm_least_squares(np.array([[1.0, 0.0]]), np.array([2.0]))
        assert np.allclose(x, [2.0, 0.0], atol=1e-14)

    def test_identity(self):
        b = np.array([0.3, -1.2, 4.0])
        assert np.allclose(min_norm_least_squares(np.eye(3), b), b, atol=1e-14)

    def test_hand_normal_equation(self):
        # A = [[1], [1]], b = (1, 3): normal equation 2x = 4.
        x = min_norm_least_squares(np.array([[1.0], [1.0]]), np.array([1.0, 3.0]))
        assert np.allclose(x, [2.0], atol=1e-14)

    def test_normal_equation_residual(self):
        rng = np.random.default_rng(17)
        a_mat = rng.standard_normal((6, 10))
        b = rng.standard_normal(6)
        x = min_norm_least_squares(a_mat, b)
        res = np.linalg.norm(a_mat.T @ (a_mat @ x - b))
        assert res <= 1e-10 * (1.0 + np.linalg.norm(a_mat.T @ b))

    def test_rejects_mismatch_and_zero(self):
        with pytest.raises(InvalidDimensionError):
            min_norm_least_squares(np.eye(3), np.zeros(2))
        with pytest.raises(InvalidParameterError):
            min_norm_least_squares(np.zeros((2, 2)), np.ones(2))


class TestSolveKktSaddle:
    def test_hand_case(self):
        # Q = 1.5 I, A = I, b = (1, 2): x* = b, lam* = -grad f(x*).
        prob = make_quadratic_problem(
            1.5 * np.eye(2), np.zeros(2), m=2, a_mat=np.eye(2), b=np.array([1.0, 2.0])
        )
        saddle = solve_kkt_saddle(prob)
        assert np.allclose(saddle.x_star, [1.0, 2.0], atol=1e-12)
        assert np.allclose(saddle.lambda_star, [-1.5, -3.0], atol=1e-12)

    def test_unconstrained_trivial(self):
        prob = make_quadratic_problem(np.eye(3), np.zeros(3))
        saddle = solve_kkt_saddle(prob)
        assert np.allclose(saddle.x_star, 0.0, atol=1e-14)
        assert prob.f_value(saddle.x_star) == 0.0

    def test_least_squares_instance_stationarity(self):
        prob = gen_least_squares(20, 40, 0.8, RngSpec(12))
        saddle = solve_kkt_saddle(prob)
        a_mat, b = prob.meta["data_matrix"], prob.meta["data_rhs"]
        res = np.linalg.norm(a_mat.T @ (a_mat @ saddle.x_star - b))
        assert res <= 1e-8 * (1.0 + np.linalg.norm(a_mat.T @ b))
        # Independent factorization oracle: objective value must agree.
        x_oracle = min_norm_least_squares(a_mat, b)
        assert abs(prob.f_value(saddle.x_star) - prob.f_value(x_oracle)) <= 1e-10 * (
            1.0 + prob.f_value(x_oracle)
        )

    def test_residual_matches_stored(self, qp10, qp10_saddle):
        grad = qp10.f_grad(qp10_saddle.x_star) + qp10.constraint_adjoint(
            qp10_saddle.lambda_star
        )
        feas = qp10.constraint_matvec(qp10_saddle.x_star) - qp10.rhs_b
        recomputed = max(np.linalg.norm(grad), np.linalg.norm(feas))
        assert abs(recomputed - qp10_saddle.kkt_residual) <= 1e-12

    def test_needs_quadratic_form(self):
        prob = Problem(
            dim_primal=2,
            dim_dual=0,
            f_value=lambda x: float(np.sum(np.cosh(x))),
            f_grad=lambda x: np.sinh(x),
            constraint_matvec=lambda x: np.zeros(0),
            constraint_adjoint=lambda lam: np.zeros(2),
            rhs_b=np.zeros(0),
        )
        with pytest.raises(UnsupportedProblemError):
            solve_kkt_saddle(prob)

    def test_inconsistent_system_raises(self):
        # Q = 0 with c != 0 has no stationary point.
        prob = make_quadratic_problem(np.zeros((2, 2)), np.array([1.0, 0.0]))
        with pytest.raises(NoSaddlePointError):
            solve_kkt_saddle(prob)


class TestSerialization:
    def test_equality_qp_roundtrip(self, tmp_path, qp10):
        path = tmp_path / "qp.problem"
        save_problem(qp10, path)
        loaded = load_problem(path)
        assert loaded.dim_primal == qp10.dim_primal
        assert loaded.dim_dual == qp10.dim_dual
        assert np.array_equal(loaded.constraint_dense, qp10.constraint_dense)
        assert np.array_equal(loaded.rhs_b, qp10.rhs_b)
        assert np.array_equal(loaded.planted, qp10.planted)
        x = np.linspace(-1, 1, 10)
        lam = np.linspace(0, 1, 10)
        assert loaded.f_value(x) == pytest.approx(qp10.f_value(x), rel=1e-15)
        assert np.array_equal(
            loaded.constraint_adjoint(lam), qp10.constraint_adjoint(lam)
        )

    def test_least_squares_roundtrip(self, tmp_path):
        prob = gen_least_squares(6, 9, 0.5, RngSpec(3))
        path = tmp_path / "ls.problem"
        save_problem(prob, path)
        loaded = load_problem(path)
        x = np.linspace(-1, 1, 9)
        assert loaded.f_value(x) == prob.f_value(x)
        assert np.array_equal(loaded.f_grad(x), prob.f_grad(x))
        assert loaded.dim_dual == 0

    def test_file_bytes_deterministic(self, tmp_path, qp10):
        p1, p2 = tmp_path / "a", tmp_path / "b"
        save_problem(qp10, p1)
        save_problem(qp10, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_rejects_garbage(self, tmp_path):
        path = tmp_path / "bad"
        path.write_text("not a problem file\n")
        with pytest.raises(InvalidParameterError):
            load_problem(path)
