import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fxtqp.qp import (
    QpProblem,
    SolveStatus,
    brute_force_solve,
    check_strict_complementarity,
    kkt_residual,
    solve_qp,
)


def make_problem(H, F, A=None, b=None):
    n = len(F)
    if A is None:
        A = np.zeros((0, n))
        b = np.zeros(0)
    return QpProblem(H=np.asarray(H, float), F=np.asarray(F, float),
                     A=np.asarray(A, float), b=np.asarray(b, float))


def random_feasible_problem(rng, n_max=6, m_max=10):
    """Strictly convex QP with a guaranteed interior point."""
    n = int(rng.integers(1, n_max + 1))
    m = int(rng.integers(0, m_max + 1))
    M = rng.normal(size=(n, n))
    H = M @ M.T + np.eye(n) * (0.5 + rng.random())
    F = rng.normal(size=n)
    A = rng.normal(size=(m, n))
    interior = rng.normal(size=n)
    b = A @ interior + 0.1 + rng.random(m) if m else np.zeros(0)
    return make_problem(H, F, A, b)


class TestSmallExamples:
    def test_unconstrained_origin(self):
        p = make_problem(np.eye(2), np.zeros(2))
        s = solve_qp(p)
        assert s.status is SolveStatus.OPTIMAL
        assert np.allclose(s.z_star, 0.0)
        assert s.objective == pytest.approx(0.0, abs=1e-15)

    def test_single_active_constraint(self):
        # min 0.5 z^2 s.t. z >= 1: stationarity gives z = lambda = 1
        p = make_problem([[1.0]], [0.0], [[-1.0]], [-1.0])
        for sol in (solve_qp(p), brute_force_solve(p)):
            assert sol.status is SolveStatus.OPTIMAL
            assert sol.z_star[0] == pytest.approx(1.0, abs=1e-12)
            assert sol.lambda_star[0] == pytest.approx(1.0, abs=1e-12)
            assert sol.active_set == (0,)

    def test_box_corner_projection(self):
        p = make_problem(np.eye(2), np.zeros(2),
                         [[1.0, 0.0], [0.0, 1.0]], [-1.0, -1.0])
        s = brute_force_solve(p)
        assert np.allclose(s.z_star, [-1.0, -1.0], atol=1e-12)
        assert s.active_set == (0, 1)
        assert np.allclose(solve_qp(p).z_star, s.z_star, atol=1e-10)

    def test_infeasible_has_farkas_certificate(self):
        p = make_problem([[1.0]], [0.0], [[1.0], [-1.0]], [-1.0, -1.0])
        s = solve_qp(p)
        assert s.status is SolveStatus.INFEASIBLE
        y = s.lambda_star
        assert np.all(y >= -1e-12)
        assert abs(y @ p.A) <= 1e-9
        assert y @ p.b < -1e-9
        assert brute_force_solve(p).status is SolveStatus.INFEASIBLE


class TestKktResidual:
    def test_exact_solution_zero_residuals(self):
        p = make_problem([[1.0]], [0.0], [[-1.0]], [-1.0])
        r = kkt_residual(p, solve_qp(p))
        assert r.stationarity <= 1e-12
        assert r.primal_violation <= 1e-12
        assert r.comp_slack <= 1e-12

    def test_perturbed_primal_shows_in_stationarity(self):
        p = make_problem([[1.0]], [0.0], [[-1.0]], [-1.0])
        s = solve_qp(p)
        bad = type(s)(z_star=s.z_star + 1e-3, lambda_star=s.lambda_star,
                      active_set=s.active_set, objective=s.objective,
                      status=s.status)
        r = kkt_residual(p, bad)
        assert r.stationarity == pytest.approx(1e-3, rel=1e-6)

    def test_infeasible_point_primal_violation(self):
        p = make_problem([[1.0]], [0.0], [[-1.0]], [-1.0])
        s = solve_qp(p)
        bad = type(s)(z_star=np.zeros(1), lambda_star=np.zeros(1),
                      active_set=(), objective=0.0, status=s.status)
        assert kkt_residual(p, bad).primal_violation == pytest.approx(1.0)


class TestStrictComplementarity:
    def test_active_with_positive_multiplier(self):
        p = make_problem([[1.0]], [0.0], [[-1.0]], [-1.0])
        assert check_strict_complementarity(p, solve_qp(p), tol=1e-6)

    def test_strictly_inactive_constraint(self):
        p = make_problem(np.eye(2), np.zeros(2), [[1.0, 0.0]], [5.0])
        assert check_strict_complementarity(p, solve_qp(p), tol=1e-6)

    def test_degenerate_constraint_fails(self):
        # min 0.5 z^2 s.t. z <= 0: z* = 0 and lambda* = 0 coincide
        p = make_problem([[1.0]], [0.0], [[1.0]], [0.0])
        assert not check_strict_complementarity(p, solve_qp(p), tol=1e-6)


class TestOracleAgreement:
    def test_cross_check_on_random_problems(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            p = random_feasible_problem(rng)
            a = solve_qp(p)
            o = brute_force_solve(p)
            assert a.status is SolveStatus.OPTIMAL
            assert a.objective == pytest.approx(o.objective, abs=1e-8)
            if check_strict_complementarity(p, a, tol=1e-6):
                assert np.max(np.abs(a.z_star - o.z_star)) <= 1e-6

    def test_residual_invariants_on_random_problems(self):
        rng = np.random.default_rng(11)
        for _ in range(500):
            p = random_feasible_problem(rng)
            s = solve_qp(p)
            r = kkt_residual(p, s)
            assert r.stationarity <= 1e-8
            assert r.primal_violation <= 1e-8
            assert r.comp_slack <= 1e-8
            assert np.all(s.lambda_star >= -1e-10)


class TestAlgebraicProperties:
    def test_objective_scaling_leaves_primal_scales_duals(self):
        rng = np.random.default_rng(3)
        p = random_feasible_problem(rng, n_max=4, m_max=8)
        while p.m_c < 3:
            p = random_feasible_problem(rng, n_max=4, m_max=8)
        c = 3.7
        s1 = solve_qp(p)
        s2 = solve_qp(QpProblem(H=c * p.H, F=c * p.F, A=p.A, b=p.b))
        assert np.max(np.abs(s1.z_star - s2.z_star)) <= 1e-8
        assert np.max(np.abs(c * s1.lambda_star - s2.lambda_star)) <= 1e-6 * (1 + c * np.max(np.abs(s1.lambda_star), initial=0))

    def test_warm_start_changes_nothing(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            p = random_feasible_problem(rng)
            cold = solve_qp(p)
            warm = solve_qp(p, warm_start=cold.z_star + 1e-3)
            assert warm.objective == pytest.approx(cold.objective, abs=1e-10)

    def test_deterministic_bitwise(self):
        rng = np.random.default_rng(9)
        p = random_feasible_problem(rng)
        s1, s2 = solve_qp(p), solve_qp(p)
        assert np.array_equal(s1.z_star, s2.z_star)
        assert np.array_equal(s1.lambda_star, s2.lambda_star)
        assert s1.active_set == s2.active_set

    def test_equality_encoded_rows(self):
        # z2 pinned to zero by an opposing row pair, as the freeze rule does
        p = make_problem(np.eye(3), [-1.0, -1.0, -1.0],
                         [[0, 0, 1.0], [0, 0, -1.0], [1.0, 0, 0]],
                         [0.0, 0.0, 0.3])
        s = solve_qp(p)
        assert s.status is SolveStatus.OPTIMAL
        assert np.allclose(s.z_star, [0.3, 1.0, 0.0], atol=1e-10)


@settings(max_examples=120, deadline=None)
@given(seed=st.integers(min_value=0, max_value=10_000))
def test_property_kkt_residuals_hold(seed):
    p = random_feasible_problem(np.random.default_rng(seed))
    s = solve_qp(p)
    assert s.status is SolveStatus.OPTIMAL
    r = kkt_residual(p, s)
    assert r.stationarity <= 1e-8
    assert r.primal_violation <= 1e-8
    assert r.comp_slack <= 1e-8


class TestValidation:
    def test_rejects_asymmetric_hessian(self):
        with pytest.raises(ValueError, match="symmetric"):
            make_problem([[1.0, 0.5], [0.0, 1.0]], [0.0, 0.0])

    def test_rejects_indefinite_hessian(self):
        with pytest.raises(ValueError, match="positive definite"):
            make_problem([[1.0, 0.0], [0.0, -1.0]], [0.0, 0.0])

    def test_rejects_dimension_mismatch(self):
        with pytest.raises(ValueError):
            make_problem(np.eye(2), np.zeros(2), [[1.0, 0.0]], [1.0, 2.0])

    def test_brute_force_rejects_large_problems(self):
        rng = np.random.default_rng(0)
        A = rng.normal(size=(17, 2))
        with pytest.raises(ValueError, match="m_c <= 16"):
            brute_force_solve(make_problem(np.eye(2), np.zeros(2), A, np.ones(17) * 10))
