import numpy as np
import pytest

from glsure import (BlockPartition, DegeneracyError, GroupLassoProblem,
                    assemble_system, check_assumption_A, dof_estimate,
                    dof_orthogonal, jacobian, reliability_bound,
                    sensitivity_report, solve, sure, sure_orthogonal)
from glsure.blocks import apply_delta_P
from glsure.harness import fd_jacobian, risk_terms
from glsure.sensitivity import influence_matrix, jacobian_residual

from conftest import gaussian_instance


def _solved(rng, n=15, sizes=(3,) * 8, lam_frac=0.3, tol=1e-12):
    prob = gaussian_instance(rng, n, list(sizes), lam_frac=lam_frac, n_active=3)
    return prob, solve(prob, tol=tol)


def test_assumption_A_single_block(rng):
    part = BlockPartition.contiguous([2, 2])
    X = rng.standard_normal((4, 4))
    beta = np.array([1.0, 2.0, 0.0, 0.0])
    ok, smin = check_assumption_A(X, part, beta)
    assert ok and smin > 0


def test_assumption_A_planted_dependence(rng):
    part = BlockPartition.contiguous([2, 2])
    A = rng.standard_normal((5, 2))
    X = np.hstack([A, -A])
    beta = np.array([1.0, 0.5, 1.0, 0.5])
    ok, smin = check_assumption_A(X, part, beta)
    assert not ok
    assert smin < 1e-12


def test_assumption_A_full_rank(rng):
    part = BlockPartition.contiguous([2, 3, 1])
    X = rng.standard_normal((10, 6))
    for _ in range(5):
        assert check_assumption_A(X, part, rng.standard_normal(6))[0]


def test_assumption_A_empty_support():
    part = BlockPartition.contiguous([2])
    assert check_assumption_A(np.ones((3, 2)), part, np.zeros(2))[0]


def test_system_identity_single_block():
    part = BlockPartition.contiguous([3])
    lam = 0.7
    y = np.array([2.0, -1.0, 2.0])  # ||y|| = 3
    prob = GroupLassoProblem(y, np.eye(3), part, lam)
    sol = solve(prob)
    r = np.linalg.norm(sol.beta)
    assert r == pytest.approx(3.0 - lam)
    w = np.linalg.eigvalsh(assemble_system(prob, sol))
    np.testing.assert_allclose(w, [1.0, 1 + lam / r, 1 + lam / r], rtol=1e-12)


def test_system_lasso_case(rng):
    prob, sol = _solved(rng, n=12, sizes=(1,) * 8, lam_frac=0.2)
    XI = prob.X[:, sol.support.indices]
    np.testing.assert_allclose(assemble_system(prob, sol), XI.T @ XI,
                               atol=1e-13)


def test_system_matches_operator(rng):
    prob, sol = _solved(rng)
    M = assemble_system(prob, sol)
    np.testing.assert_allclose(M, M.T, atol=0)
    np.linalg.cholesky(M)
    XI = prob.X[:, sol.support.indices]
    b = sol.support.restrict(sol.beta)
    sub = sol.support.restricted_partition()
    for _ in range(5):
        v = rng.standard_normal(b.size)
        expected = XI.T @ (XI @ v) + prob.lam * apply_delta_P(b, v, sub)
        np.testing.assert_allclose(M @ v, expected, atol=1e-12)


def test_jacobian_identity_single_block():
    part = BlockPartition.contiguous([4])
    y = np.array([1.0, -2.0, 0.5, 3.0])
    lam = 0.9
    prob = GroupLassoProblem(y, np.eye(4), part, lam)
    d = jacobian(prob, solve(prob, tol=1e-12))
    u = y / np.linalg.norm(y)
    expected = np.eye(4) - lam / np.linalg.norm(y) * (np.eye(4) - np.outer(u, u))
    np.testing.assert_allclose(d, expected, atol=1e-10)


def test_jacobian_orthonormal_lasso(rng):
    Q, _ = np.linalg.qr(rng.standard_normal((10, 6)))
    part = BlockPartition.contiguous([1] * 6)
    y = Q @ np.array([3.0, -2.0, 0.1, 0.0, 2.5, -0.05])
    prob = GroupLassoProblem(y, Q, part, 0.5)
    sol = solve(prob, tol=1e-12)
    np.testing.assert_allclose(jacobian(prob, sol),
                               Q[:, sol.support.indices].T, atol=1e-12)


def test_jacobian_against_finite_differences(rng):
    for _ in range(5):
        prob, sol = _solved(rng)
        d = jacobian(prob, sol)
        fd, stable = fd_jacobian(prob, sol, h=1e-5)
        assert stable.all()
        scale = np.abs(d).max()
        np.testing.assert_allclose(fd, d, rtol=1e-4, atol=1e-6 * scale)


def test_jacobian_residual(rng):
    for _ in range(5):
        prob, sol = _solved(rng)
        d = jacobian(prob, sol)
        assert jacobian_residual(prob, sol, d) <= 1e-10


def test_dof_empty_support(rng):
    prob = gaussian_instance(rng, 8, [2, 2, 2, 2])
    prob = prob.with_lam(prob.lambda_max() * 2)
    sol = solve(prob)
    assert dof_estimate(prob, sol) == 0.0
    assert sure(prob, sol, 0.4) == pytest.approx(prob.y @ prob.y - 8 * 0.16)


def test_dof_trace_equals_eigenvalue_sum(rng):
    prob, sol = _solved(rng)
    J = prob.X[:, sol.support.indices] @ jacobian(prob, sol)
    assert dof_estimate(prob, sol) == pytest.approx(
        np.linalg.eigvals(J).real.sum(), abs=1e-8)


def test_dof_range(rng):
    for frac in (0.05, 0.2, 0.5, 0.9):
        prob, sol = _solved(rng, lam_frac=frac)
        dof = dof_estimate(prob, sol)
        assert -1e-6 <= dof <= prob.n + 1e-6


def test_lasso_dof_is_support_size(rng):
    for _ in range(5):
        prob, sol = _solved(rng, n=20, sizes=(1,) * 12, lam_frac=0.3)
        assert dof_estimate(prob, sol) == pytest.approx(sol.support.size,
                                                        abs=1e-8)


def test_identity_matches_closed_forms(rng):
    part = BlockPartition.contiguous([1, 2, 3, 4, 5])
    for _ in range(10):
        y = rng.standard_normal(15) * 1.5
        lam, sigma = rng.uniform(0.3, 2.0), rng.uniform(0.1, 1.0)
        prob = GroupLassoProblem(y, np.eye(15), part, lam)
        sol = solve(prob, tol=1e-12)
        assert dof_estimate(prob, sol) == pytest.approx(
            dof_orthogonal(y, part, lam), abs=1e-8)
        assert sure(prob, sol, sigma) == pytest.approx(
            sure_orthogonal(y, part, lam, sigma), abs=1e-8)


def test_reliability_identity_unit_norm(rng):
    part = BlockPartition.contiguous([3, 3, 2])
    y = rng.standard_normal(8) * 2
    prob = GroupLassoProblem(y, np.eye(8), part, 0.5)
    sol = solve(prob)
    assert sol.support.blocks
    terms = reliability_bound(prob, sol, sigma=1.0, mu0_norm=0.0)
    assert terms.U_norm == pytest.approx(1.0, abs=1e-10)


def test_reliability_empty_support(rng):
    prob = gaussian_instance(rng, 8, [2, 2, 2, 2])
    prob = prob.with_lam(prob.lambda_max() * 2)
    terms = reliability_bound(prob, solve(prob), sigma=0.5, mu0_norm=2.0)
    assert terms.U_norm == 0.0
    assert terms.bound == pytest.approx(18 / 8 + 8 * 4.0 / (64 * 0.25))


def test_influence_norm_power_iteration(rng):
    prob, sol = _solved(rng)
    U = influence_matrix(prob, sol)
    XI = prob.X[:, sol.support.indices]
    U_explicit = XI.T @ XI @ np.linalg.inv(assemble_system(prob, sol))
    np.testing.assert_allclose(U, U_explicit, rtol=1e-8, atol=1e-10)
    # power iteration on U^T U
    v = np.ones(U.shape[0])
    for _ in range(5000):
        w = U_explicit.T @ (U_explicit @ v)
        v = w / np.linalg.norm(w)
    oracle = np.sqrt(np.linalg.norm(U_explicit.T @ (U_explicit @ v)))
    assert reliability_bound(prob, sol, 1.0).U_norm == pytest.approx(
        oracle, rel=1e-8)


def test_risk_terms_consistent(rng):
    prob, sol = _solved(rng)
    dof, u, cond = risk_terms(prob, sol)
    assert dof == pytest.approx(dof_estimate(prob, sol), rel=1e-10)
    assert u == pytest.approx(reliability_bound(prob, sol, 1.0).U_norm, rel=1e-10)
    assert cond >= 1.0


def test_local_support_constancy(rng):
    prob, sol = _solved(rng)
    same = 0
    trials = 100
    for _ in range(trials):
        delta = rng.standard_normal(prob.n)
        delta *= 1e-6 * rng.uniform() / np.linalg.norm(delta)
        s = solve(prob.with_y(prob.y + delta), tol=1e-12, beta_init=sol.beta)
        same += s.support.blocks == sol.support.blocks
    assert same >= 0.99 * trials


def test_first_order_prediction(rng):
    prob, sol = _solved(rng)
    d = jacobian(prob, sol)
    idx = sol.support.indices
    for _ in range(10):
        delta = rng.standard_normal(prob.n)
        delta *= 1e-5 / np.linalg.norm(delta)
        s = solve(prob.with_y(prob.y + delta), tol=1e-13, beta_init=sol.beta)
        assert s.support.blocks == sol.support.blocks
        err = np.linalg.norm(s.beta[idx] - sol.beta[idx] - d @ delta)
        assert err / 1e-5 <= 1e-3


def test_report_and_degeneracy(rng):
    prob, sol = _solved(rng)
    rep = sensitivity_report(prob, sol, sigma=0.3, mu0_norm=1.0)
    assert rep.degeneracy_flags.assumption_A
    assert rep.jacobian_residual <= 1e-10
    assert rep.dof == pytest.approx(dof_estimate(prob, sol))
    assert rep.sure == pytest.approx(sure(prob, sol, 0.3))
    d = rep.to_dict()
    assert set(d) >= {"dof", "sure", "jacobian_d", "degeneracy_flags",
                      "reliability_terms", "mu_hat"}

    A = rng.standard_normal((6, 2))
    part = BlockPartition.contiguous([2, 2])
    X = np.hstack([A, A])
    y = A @ np.array([2.0, 1.0])
    dup = GroupLassoProblem(y, X, part, 0.1)
    s = solve(dup)
    assert not check_assumption_A(X, part, s.beta)[0]
    with pytest.warns(RuntimeWarning), pytest.raises(DegeneracyError):
        sensitivity_report(dup, s, sigma=1.0)
