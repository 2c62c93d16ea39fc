"""Local sensitivity of a group Lasso solution and the derived risk estimates.

On the support ``I`` of a solution whose block images ``X_b beta_b`` are
linearly independent, the solution map is differentiable in ``y`` with
Jacobian ``d = M^{-1} X_I^T`` where ``M = X_I^T X_I + lam * delta_P(beta_I)``.
The trace of ``X_I d`` is an unbiased estimate of the degrees of freedom and
plugs into Stein's unbiased risk estimate.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .blocks import BlockPartition, BlockSupport, block_support, delta_P_matrix
from .solver import GroupLassoProblem, GroupLassoSolution

DEFAULT_EPS_RANK = 1e-8
COND_WARN = 1e10
TIE_TOL = 1e-8


class DegeneracyError(ArithmeticError):
    """The support system is numerically singular (A(beta) violated)."""


class DegeneracyWarning(RuntimeWarning):
    pass


def image_matrix(X: np.ndarray, partition: BlockPartition,
                 beta: np.ndarray) -> np.ndarray:
    """Columns ``X_b beta_b`` for every nonzero block ``b`` of ``beta``."""
    part = partition
    support = block_support(beta, partition)
    cols = [X[:, list(part.blocks[b])] @ beta[list(part.blocks[b])]
            for b in support.blocks]
    if not cols:
        return np.zeros((X.shape[0], 0))
    return np.column_stack(cols)


def check_assumption_A(X: np.ndarray, partition: BlockPartition,
                       beta: np.ndarray, eps_rank: float = DEFAULT_EPS_RANK
                       ) -> tuple[bool, float]:
    """Test linear independence of the active block images.

    Returns ``(holds, smallest singular value)``. Independence is declared
    when the smallest singular value exceeds ``eps_rank`` times the largest.
    An empty support satisfies the assumption vacuously.
    """
    A = image_matrix(X, partition, beta)
    if A.shape[1] == 0:
        return True, np.inf
    if A.shape[1] > A.shape[0]:
        return False, 0.0
    s = np.linalg.svd(A, compute_uv=False)
    return bool(s[-1] > eps_rank * s[0]), float(s[-1])


def assemble_system(problem: GroupLassoProblem,
                    solution: GroupLassoSolution) -> np.ndarray:
    """The matrix ``X_I^T X_I + lam * delta_P`` on the solution's support."""
    sup = solution.support
    XI = problem.X[:, sup.indices]
    b = sup.restrict(solution.beta)
    return XI.T @ XI + problem.lam * delta_P_matrix(b, sup.restricted_partition())


def _factor(M: np.ndarray):
    """Cholesky factor of M, or a symmetric-solve fallback with a warning."""
    try:
        return scipy.linalg.cho_factor(M), True
    except np.linalg.LinAlgError:
        pass
    w = np.linalg.eigvalsh(M)
    if w[0] <= 1e-14 * max(w[-1], 1.0):
        raise DegeneracyError(
            f"support system is singular (smallest eigenvalue {w[0]:.3e})")
    warnings.warn("Cholesky failed on the support system; using a symmetric "
                  "solve", DegeneracyWarning, stacklevel=3)
    return M, False


def _solve_system(factor, rhs):
    fac, is_chol = factor
    if is_chol:
        return scipy.linalg.cho_solve(fac, rhs)
    return scipy.linalg.solve(fac, rhs, assume_a="sym")


def jacobian(problem: GroupLassoProblem,
             solution: GroupLassoSolution) -> np.ndarray:
    """``d(y, lam)``: derivative of the active coefficients with respect to y.

    Rows follow ``solution.support.indices``; columns are observations.
    """
    sup = solution.support
    XI = problem.X[:, sup.indices]
    if not sup.blocks:
        return np.zeros((0, problem.n))
    M = assemble_system(problem, solution)
    return _solve_system(_factor(M), XI.T)


def jacobian_residual(problem: GroupLassoProblem, solution: GroupLassoSolution,
                      d: np.ndarray) -> float:
    """Relative Frobenius residual of ``M d = X_I^T``."""
    if d.shape[0] == 0:
        return 0.0
    XIt = problem.X[:, solution.support.indices].T
    M = assemble_system(problem, solution)
    return float(np.linalg.norm(M @ d - XIt) / np.linalg.norm(XIt))


def dof_estimate(problem: GroupLassoProblem,
                 solution: GroupLassoSolution) -> float:
    """Divergence of the prediction map: ``trace(X_I d(y, lam))``."""
    d = jacobian(problem, solution)
    if d.shape[0] == 0:
        return 0.0
    XI = problem.X[:, solution.support.indices]
    # tr(X_I d) = sum_ij (X_I)_ji d_ij
    return float(np.einsum("ji,ij->", XI, d))


def sure(problem: GroupLassoProblem, solution: GroupLassoSolution,
         sigma: float, dof: float | None = None) -> float:
    """Stein unbiased estimate of ``E||mu_hat - mu_0||^2``."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if dof is None:
        dof = dof_estimate(problem, solution)
    r = problem.y - problem.X @ solution.beta
    return float(r @ r) - problem.n * sigma**2 + 2.0 * sigma**2 * dof


def sure_value(residual_sq: float, n: int, sigma: float, dof: float) -> float:
    return residual_sq - n * sigma**2 + 2.0 * sigma**2 * dof


@dataclass(frozen=True)
class ReliabilityTerms:
    U_norm: float
    bound: float | None


def influence_matrix(problem: GroupLassoProblem,
                     solution: GroupLassoSolution) -> np.ndarray:
    """``U_I = X_I^T X_I M^{-1}``."""
    sup = solution.support
    if not sup.blocks:
        return np.zeros((0, 0))
    XI = problem.X[:, sup.indices]
    G = XI.T @ XI
    M = assemble_system(problem, solution)
    # G M^{-1} = (M^{-1} G)^T since both are symmetric
    return _solve_system(_factor(M), G).T


def reliability_bound(problem: GroupLassoProblem, solution: GroupLassoSolution,
                      sigma: float, mu0_norm: float | None = None
                      ) -> ReliabilityTerms:
    """Spectral norm of ``U_I`` and the reliability bound for this draw.

    The bound ``(18 + 4 ||U_I||^2)/n + 8 ||mu_0||^2 / (n^2 sigma^2)`` uses the
    realized ``||U_I||`` in place of its expectation. ``||U_empty|| = 0``.
    The bound is ``None`` when ``mu0_norm`` is unknown.
    """
    U = influence_matrix(problem, solution)
    u = float(np.linalg.norm(U, 2)) if U.size else 0.0
    return ReliabilityTerms(u, reliability_rhs(problem.n, sigma, u**2, mu0_norm))


def reliability_rhs(n: int, sigma: float, u_norm_sq: float,
                    mu0_norm: float | None) -> float | None:
    if mu0_norm is None:
        return None
    return (18.0 + 4.0 * u_norm_sq) / n + 8.0 * mu0_norm**2 / (n**2 * sigma**2)


@dataclass(frozen=True)
class DegeneracyFlags:
    assumption_A: bool
    min_singular_value: float
    condition_number: float
    near_tie: bool

    @property
    def degenerate(self) -> bool:
        return (not self.assumption_A) or self.condition_number > COND_WARN


@dataclass(frozen=True)
class SensitivityReport:
    support: BlockSupport
    jacobian_d: np.ndarray = field(repr=False)
    dof: float
    sure: float | None
    mu_hat: np.ndarray = field(repr=False)
    reliability_terms: ReliabilityTerms
    degeneracy_flags: DegeneracyFlags
    jacobian_residual: float

    def to_dict(self, include_matrix: bool = True) -> dict:
        out = {
            "support_blocks": list(self.support.blocks),
            "support_size": self.support.size,
            "dof": self.dof,
            "sure": self.sure,
            "mu_hat": self.mu_hat.tolist(),
            "reliability_terms": {"U_norm": self.reliability_terms.U_norm,
                                  "bound": self.reliability_terms.bound},
            "degeneracy_flags": {
                "assumption_A": self.degeneracy_flags.assumption_A,
                "min_singular_value": _finite_or_none(
                    self.degeneracy_flags.min_singular_value),
                "condition_number": _finite_or_none(
                    self.degeneracy_flags.condition_number),
                "near_tie": self.degeneracy_flags.near_tie,
            },
            "jacobian_residual": self.jacobian_residual,
        }
        if include_matrix:
            out["jacobian_d"] = self.jacobian_d.tolist()
        return out


def _finite_or_none(v: float) -> float | None:
    return float(v) if np.isfinite(v) else None


def degeneracy_flags(problem: GroupLassoProblem, solution: GroupLassoSolution,
                     eps_rank: float = DEFAULT_EPS_RANK) -> DegeneracyFlags:
    """Numerical diagnostics for proximity to a support transition."""
    sup = solution.support
    ok, smin = check_assumption_A(problem.X, problem.partition, solution.beta,
                                  eps_rank)
    cond = 1.0
    if sup.blocks:
        w = np.linalg.eigvalsh(assemble_system(problem, solution))
        cond = float(w[-1] / w[0]) if w[0] > 0 else np.inf
    corr = problem.X.T @ (problem.y - problem.X @ solution.beta)
    norms = problem.partition.norms(corr)
    off = np.array(sup.complement, dtype=np.intp)
    tie = bool(np.any(np.abs(norms[off] - problem.lam) <= TIE_TOL * problem.lam))
    return DegeneracyFlags(ok, smin, cond, tie)


def sensitivity_report(problem: GroupLassoProblem,
                       solution: GroupLassoSolution, sigma: float | None = None,
                       mu0_norm: float | None = None,
                       eps_rank: float = DEFAULT_EPS_RANK) -> SensitivityReport:
    """Jacobian, DOF, SURE and reliability terms in one pass.

    Raises
    ------
    DegeneracyError
        If the support system cannot be factored.
    """
    flags = degeneracy_flags(problem, solution, eps_rank)
    if flags.degenerate or flags.near_tie:
        warnings.warn(
            f"solution is close to a degenerate configuration "
            f"(A holds: {flags.assumption_A}, cond: {flags.condition_number:.2e}, "
            f"near tie: {flags.near_tie}); y may lie near a support transition",
            DegeneracyWarning, stacklevel=2)
    if not flags.assumption_A:
        raise DegeneracyError(
            "active block images are linearly dependent; purify the solution "
            "first")
    d = jacobian(problem, solution)
    XI = problem.X[:, solution.support.indices]
    dof = float(np.einsum("ji,ij->", XI, d)) if d.size else 0.0
    s = sure(problem, solution, sigma, dof) if sigma is not None else None
    rel = reliability_bound(problem, solution, sigma or 1.0,
                            mu0_norm if sigma is not None else None)
    return SensitivityReport(
        support=solution.support, jacobian_d=d, dof=dof, sure=s,
        mu_hat=problem.X @ solution.beta, reliability_terms=rel,
        degeneracy_flags=flags,
        jacobian_residual=jacobian_residual(problem, solution, d))
