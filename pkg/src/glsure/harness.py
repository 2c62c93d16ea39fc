"""Monte Carlo and finite-difference validation of the DOF and SURE formulas.

Replicate ``r`` draws its noise from ``numpy.random.default_rng([seed, r])``,
so results depend only on the seed and not on how replicates are scheduled.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .blocks import BlockPartition
from .purification import PurificationError, purify
from .sensitivity import (COND_WARN, DEFAULT_EPS_RANK, DegeneracyError,
                          assemble_system, check_assumption_A, sure)
from .solver import (GroupLassoProblem, GroupLassoSolution,
                     NonConvergenceError, solve)

FD_TOL = 1e-12


@dataclass(frozen=True)
class Design:
    """Design matrix and block structure shared by all replicates."""

    X: np.ndarray
    partition: BlockPartition

    @classmethod
    def identity(cls, partition: BlockPartition) -> Design:
        return cls(np.eye(partition.p), partition)

    def problem(self, y: np.ndarray, lam: float) -> GroupLassoProblem:
        return GroupLassoProblem(y, self.X, self.partition, lam)


@dataclass(frozen=True)
class GroundTruth:
    beta0: np.ndarray
    mu0: np.ndarray
    sigma: float
    seed: int

    @classmethod
    def from_design(cls, design: Design, beta0: np.ndarray, sigma: float,
                    seed: int) -> GroundTruth:
        beta0 = np.asarray(beta0, dtype=float)
        return cls(beta0, design.X @ beta0, float(sigma), int(seed))

    def draw(self, replicate: int) -> np.ndarray:
        """Observation ``mu0 + sigma * z`` for one replicate."""
        rng = np.random.default_rng([self.seed, replicate])
        return self.mu0 + self.sigma * rng.standard_normal(self.mu0.shape[0])


@dataclass(frozen=True)
class McReport:
    lam: float
    replicates: int
    seed: int
    dof_formula_mean: float
    dof_formula_se: float
    dof_covariance_mean: float
    dof_covariance_se: float
    sure_mean: float
    sure_se: float
    se_true_mean: float
    se_true_se: float
    reliability_lhs: float
    reliability_bound: float
    u_norm_sq_mean: float
    u_norm_min: float
    u_norm_max: float
    degenerate_count: int
    purified_count: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class _Replicate:
    """Per-lambda outcomes of one noise draw."""

    z: np.ndarray
    mu_hat: np.ndarray
    dof: np.ndarray
    sure: np.ndarray
    se: np.ndarray
    u_norm: np.ndarray
    nonempty: np.ndarray
    degenerate: np.ndarray
    purified: np.ndarray


def risk_terms(problem: GroupLassoProblem,
               solution: GroupLassoSolution) -> tuple[float, float, float]:
    """``(dof, ||U_I||, cond(M))`` from a single factorization of ``M``."""
    sup = solution.support
    if not sup.blocks:
        return 0.0, 0.0, 1.0
    XI = problem.X[:, sup.indices]
    G = XI.T @ XI
    M = assemble_system(problem, solution)
    w, V = np.linalg.eigh(M)
    if w[0] <= 0:
        raise DegeneracyError("support system is not positive definite")
    # M^{-1} G through the eigendecomposition; M is tiny at desk scale
    MinvG = (V / w) @ (V.T @ G)
    dof = float(np.trace(MinvG))
    u = float(np.linalg.norm(MinvG.T, 2))
    return dof, u, float(w[-1] / w[0])


def _certified_solution(problem, beta_init, tol, eps_rank):
    """Solve, purify if needed, and report ``(solution, purified)``."""
    sol = solve(problem, tol=tol, beta_init=beta_init)
    ok = check_assumption_A(problem.X, problem.partition, sol.beta, eps_rank)[0]
    if ok:
        return sol, False
    return purify(problem, sol, eps_rank=eps_rank, tol=tol), True


def _run_replicate(design: Design, truth: GroundTruth, grid: Sequence[float],
                   r: int, tol: float, eps_rank: float) -> _Replicate:
    y = truth.draw(r)
    n, g = y.shape[0], len(grid)
    out = _Replicate(
        z=(y - truth.mu0) / truth.sigma, mu_hat=np.zeros((g, n)),
        dof=np.full(g, np.nan), sure=np.full(g, np.nan), se=np.full(g, np.nan),
        u_norm=np.full(g, np.nan), nonempty=np.zeros(g, bool),
        degenerate=np.zeros(g, bool), purified=np.zeros(g, bool))
    beta = None
    # largest lambda first so each solve warm-starts from a sparser solution
    for k in sorted(range(g), key=lambda k: -grid[k]):
        problem = design.problem(y, grid[k])
        try:
            sol, out.purified[k] = _certified_solution(problem, beta, tol,
                                                       eps_rank)
            beta = sol.beta
            if not check_assumption_A(problem.X, problem.partition, sol.beta,
                                      eps_rank)[0]:
                raise DegeneracyError("assumption A fails after purification")
            dof, u, cond = risk_terms(problem, sol)
            if cond > COND_WARN:
                raise DegeneracyError("ill-conditioned support system")
        except (NonConvergenceError, PurificationError, DegeneracyError):
            out.degenerate[k] = True
            continue
        mu = problem.X @ sol.beta
        out.mu_hat[k] = mu
        out.dof[k] = dof
        out.u_norm[k] = u
        out.nonempty[k] = bool(sol.support.blocks)
        out.sure[k] = sure(problem, sol, truth.sigma, dof)
        out.se[k] = float((mu - truth.mu0) @ (mu - truth.mu0))
    return out


def _run_chunk(args):
    design, truth, grid, reps, tol, eps_rank = args
    return [_run_replicate(design, truth, grid, r, tol, eps_rank) for r in reps]


def _simulate(design, truth, grid, replicates, tol, eps_rank, workers):
    reps = range(replicates)
    if workers <= 1:
        return _run_chunk((design, truth, grid, reps, tol, eps_rank))
    chunks = [reps[i::workers] for i in range(workers)]
    with ProcessPoolExecutor(workers) as pool:
        parts = list(pool.map(
            _run_chunk,
            [(design, truth, grid, c, tol, eps_rank) for c in chunks]))
    results = [None] * replicates
    for c, part in zip(chunks, parts):
        for r, res in zip(c, part):
            results[r] = res
    return results


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def _aggregate(results: list[_Replicate], k: int, lam: float,
               truth: GroundTruth) -> McReport:
    keep = np.array([not r.degenerate[k] for r in results])
    n_deg = int((~keep).sum())
    if keep.sum() < 2:
        raise DegeneracyError(
            f"only {int(keep.sum())} usable replicates at lambda={lam:g}")
    rs = [r for r, ok in zip(results, keep) if ok]
    z = np.array([r.z for r in rs])
    mu = np.array([r.mu_hat[k] for r in rs])
    dof = np.array([r.dof[k] for r in rs])
    sure_ = np.array([r.sure[k] for r in rs])
    se = np.array([r.se[k] for r in rs])
    u = np.array([r.u_norm[k] for r in rs])
    nonempty = np.array([r.nonempty[k] for r in rs])
    R = len(rs)
    n = truth.mu0.shape[0]
    sigma = truth.sigma
    # known-mean covariance: (y - mu0) = sigma z
    cov_terms = (z * (mu - mu.mean(axis=0))).sum(axis=1) / sigma * R / (R - 1)
    lhs = float(np.mean((sure_ - se) ** 2) / (n**2 * sigma**4))
    u_sq = float(np.mean(u**2))
    mu0_sq = float(truth.mu0 @ truth.mu0)
    bound = (18.0 + 4.0 * u_sq) / n + 8.0 * mu0_sq / (n**2 * sigma**2)
    u_ne = u[nonempty]
    return McReport(
        lam=float(lam), replicates=R, seed=truth.seed,
        dof_formula_mean=_mean_se(dof)[0], dof_formula_se=_mean_se(dof)[1],
        dof_covariance_mean=_mean_se(cov_terms)[0],
        dof_covariance_se=_mean_se(cov_terms)[1],
        sure_mean=_mean_se(sure_)[0], sure_se=_mean_se(sure_)[1],
        se_true_mean=_mean_se(se)[0], se_true_se=_mean_se(se)[1],
        reliability_lhs=lhs, reliability_bound=bound, u_norm_sq_mean=u_sq,
        u_norm_min=float(u_ne.min()) if u_ne.size else float("nan"),
        u_norm_max=float(u_ne.max()) if u_ne.size else float("nan"),
        degenerate_count=n_deg,
        purified_count=int(sum(r.purified[k] for r in rs)))


def mc_dof(truth: GroundTruth, design: Design, lam: float, replicates: int,
           tol: float = 1e-10, eps_rank: float = DEFAULT_EPS_RANK,
           workers: int = 1) -> McReport:
    """Compare the divergence formula with the covariance definition of DOF.

    Both channels use the same ``replicates`` noise draws. Degenerate
    replicates are dropped and counted in ``degenerate_count``.
    """
    if replicates < 100:
        raise ValueError("at least 100 replicates are required")
    results = _simulate(design, truth, [lam], replicates, tol, eps_rank, workers)
    return _aggregate(results, 0, lam, truth)


def mc_sure_risk(truth: GroundTruth, design: Design,
                 lambda_grid: Sequence[float], replicates: int,
                 tol: float = 1e-10, eps_rank: float = DEFAULT_EPS_RANK,
                 workers: int = 1) -> list[McReport]:
    """SURE against the realized squared error over a lambda grid.

    Each report also carries the empirical reliability
    ``E(SURE - SE)^2 / (n^2 sigma^4)`` and its upper bound evaluated with the
    replicate average of ``||U_I||^2``.
    """
    grid = [float(v) for v in lambda_grid]
    if not grid:
        raise ValueError("lambda grid is empty")
    if any(a > b for a, b in zip(grid, grid[1:])):
        raise ValueError("lambda grid must be sorted in increasing order")
    if replicates < 100:
        raise ValueError("at least 100 replicates are required")
    results = _simulate(design, truth, grid, replicates, tol, eps_rank, workers)
    return [_aggregate(results, k, lam, truth) for k, lam in enumerate(grid)]


@dataclass(frozen=True)
class FdDivergence:
    value: float
    flagged: bool
    unstable: tuple[int, ...] = ()


def default_step(y: np.ndarray) -> float:
    return 1e-5 * (1.0 + float(np.max(np.abs(y))))


def _perturbed(problem, base, i, h, tol):
    """Solutions at ``y +/- h e_i`` and whether both keep the base support."""
    sols = []
    for sign in (1.0, -1.0):
        y = problem.y.copy()
        y[i] += sign * h
        sols.append(solve(problem.with_y(y), tol=tol, beta_init=base.beta))
    stable = all(s.support.blocks == base.support.blocks for s in sols)
    return sols, stable


def fd_divergence(problem: GroupLassoProblem, h: float | None = None,
                  tol: float = FD_TOL) -> FdDivergence:
    """Central-difference divergence of ``y -> X beta_hat(y)``.

    Coordinates whose perturbations change the support are retried with
    ``h/10``; if still unstable the result is flagged.
    """
    h = default_step(problem.y) if h is None else h
    if not h > 0:
        raise ValueError("step must be positive")
    base = solve(problem, tol=tol)
    X = problem.X
    total = 0.0
    unstable = []
    for i in range(problem.n):
        step = h
        (sp, sm), stable = _perturbed(problem, base, i, step, tol)
        if not stable:
            step = h / 10
            (sp, sm), stable = _perturbed(problem, base, i, step, tol)
            if not stable:
                unstable.append(i)
        total += (X[i] @ sp.beta - X[i] @ sm.beta) / (2 * step)
    return FdDivergence(float(total), bool(unstable), tuple(unstable))


def fd_jacobian(problem: GroupLassoProblem, base: GroupLassoSolution,
                h: float | None = None, tol: float = FD_TOL
                ) -> tuple[np.ndarray, np.ndarray]:
    """Central differences of the active coefficients with respect to ``y``.

    Returns ``(J, stable)`` where ``J`` has the layout of the analytic
    Jacobian and ``stable[i]`` tells whether the support survived the
    perturbation of ``y_i``.
    """
    h = default_step(problem.y) if h is None else h
    idx = base.support.indices
    J = np.zeros((idx.size, problem.n))
    stable = np.zeros(problem.n, bool)
    for i in range(problem.n):
        (sp, sm), stable[i] = _perturbed(problem, base, i, h, tol)
        J[:, i] = (sp.beta[idx] - sm.beta[idx]) / (2 * h)
    return J, stable


@dataclass(frozen=True)
class LambdaSelection:
    lam: float
    index: int
    grid: tuple[float, ...]
    sure: tuple[float, ...] = field(repr=False)
    dof: tuple[float, ...] = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam, "index": self.index,
            "curve": [{"lambda": l, "sure": _nan_none(s), "dof": _nan_none(d)}
                      for l, s, d in zip(self.grid, self.sure, self.dof)],
        }


def _nan_none(v):
    return None if not np.isfinite(v) else float(v)


def select_lambda(problem: GroupLassoProblem, lambda_grid: Sequence[float],
                  sigma: float, tol: float = 1e-10,
                  eps_rank: float = DEFAULT_EPS_RANK) -> LambdaSelection:
    """Grid value minimizing SURE; ties go to the larger lambda.

    ``problem.lam`` is ignored. Degenerate grid points get a NaN SURE and
    are skipped.
    """
    grid = [float(v) for v in lambda_grid]
    if not grid:
        raise ValueError("lambda grid is empty")
    design = Design(problem.X, problem.partition)
    sure_vals = np.full(len(grid), np.nan)
    dofs = np.full(len(grid), np.nan)
    beta = None
    for k in sorted(range(len(grid)), key=lambda k: -grid[k]):
        prob = design.problem(problem.y, grid[k])
        try:
            sol, _ = _certified_solution(prob, beta, tol, eps_rank)
            beta = sol.beta
            dof, _, cond = risk_terms(prob, sol)
            if cond > COND_WARN:
                continue
        except (NonConvergenceError, PurificationError, DegeneracyError):
            continue
        dofs[k] = dof
        sure_vals[k] = sure(prob, sol, sigma, dof)
    if np.all(np.isnan(sure_vals)):
        raise DegeneracyError("every grid point is degenerate")
    best = np.nanmin(sure_vals)
    # exact ties only; among them the largest lambda wins
    ties = [k for k in range(len(grid)) if sure_vals[k] == best]
    k = max(ties, key=lambda k: grid[k])
    return LambdaSelection(grid[k], k, tuple(grid), tuple(sure_vals),
                           tuple(dofs))
