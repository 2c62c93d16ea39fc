"""Group Lasso solver with a first-order optimality certificate.

Minimizes ``0.5 * ||y - X b||^2 + lam * sum_b ||b_b||`` with a monotone
accelerated proximal gradient scheme. Once the iterates settle on a block
support, Newton steps on the support equations polish the solution so the
optimality residual can be driven to machine precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .blocks import (BlockPartition, BlockSupport, block_support,
                     delta_P_matrix, support_threshold, truncate)

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 200_000
DEFAULT_EPS_SUPP = 1e-9


class NonConvergenceError(RuntimeError):
    """Raised when the KKT residual does not reach ``tol`` within budget."""

    def __init__(self, message: str, beta: np.ndarray, residual: float):
        super().__init__(message)
        self.beta = beta
        self.residual = residual


@dataclass(frozen=True)
class GroupLassoProblem:
    y: np.ndarray
    X: np.ndarray
    partition: BlockPartition
    lam: float

    def __post_init__(self):
        y = np.array(self.y, dtype=float).ravel()
        X = np.array(self.X, dtype=float)
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise ValueError(f"X has shape {X.shape}, y has length {y.size}")
        if X.shape[1] != self.partition.p:
            raise ValueError(
                f"X has {X.shape[1]} columns, partition covers {self.partition.p}")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        y.setflags(write=False)
        X.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "lam", float(self.lam))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def with_y(self, y: np.ndarray) -> GroupLassoProblem:
        return GroupLassoProblem(y, self.X, self.partition, self.lam)

    def with_lam(self, lam: float) -> GroupLassoProblem:
        return GroupLassoProblem(self.y, self.X, self.partition, lam)

    def lambda_max(self) -> float:
        """Smallest lambda for which zero is a solution."""
        return float(self.partition.norms(self.X.T @ self.y).max())


@dataclass(frozen=True)
class GroupLassoSolution:
    beta: np.ndarray
    support: BlockSupport
    kkt_residual: float
    objective: float
    n_iter: int = 0
    purification_steps: int = 0
    history: tuple[float, ...] = field(default=(), repr=False)

    def to_dict(self) -> dict:
        return {
            "beta": self.beta.tolist(),
            "support_blocks": list(self.support.blocks),
            "kkt_residual": self.kkt_residual,
            "objective": self.objective,
            "n_iter": self.n_iter,
            "purification_steps": self.purification_steps,
        }


def objective(problem: GroupLassoProblem, beta: np.ndarray) -> float:
    r = problem.y - problem.X @ beta
    return 0.5 * float(r @ r) + problem.lam * problem.partition.group_norm(beta)


def kkt_check(problem: GroupLassoProblem, beta: np.ndarray,
              eps_supp: float = 0.0) -> float:
    """Residual of the first-order optimality conditions at ``beta``.

    On the support the correlation ``X_b^T r`` must equal
    ``lam * beta_b / ||beta_b||``; off the support its norm must not exceed
    ``lam``. Returns the largest violation, zero iff ``beta`` is a minimizer.
    Blocks with norm at or below ``eps_supp * max|beta|`` count as inactive.
    """
    part = problem.partition
    norms = part.norms(beta)
    active = norms > support_threshold(beta, eps_supp)
    scale = np.where(active, 1.0, 0.0)
    beta = part.scale_blocks(beta, scale)
    corr = problem.X.T @ (problem.y - problem.X @ beta)
    with np.errstate(divide="ignore", invalid="ignore"):
        target = part.scale_blocks(
            beta, np.where(active, problem.lam / norms, 0.0))
    gap = part.norms(corr - target)
    on = gap[active].max(initial=0.0)
    off = (gap[~active] - problem.lam).max(initial=0.0)
    return float(max(on, off, 0.0))


def spectral_norm_sq(X: np.ndarray, n_iter: int = 50, tol: float = 1e-10,
                     seed: int = 0) -> float:
    """Largest eigenvalue of ``X^T X`` by power iteration."""
    v = np.random.default_rng(seed).standard_normal(X.shape[1])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(n_iter):
        w = X.T @ (X @ v)
        new = float(np.linalg.norm(w))
        if new == 0:
            return 0.0
        v = w / new
        if abs(new - est) <= tol * new:
            est = new
            break
        est = new
    return est


def block_soft_threshold_vec(x: np.ndarray, thresh: float,
                             partition: BlockPartition) -> np.ndarray:
    """Proximal map of ``thresh * group_norm``."""
    norms = partition.norms(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(norms > thresh, 1.0 - thresh / norms, 0.0)
    return partition.scale_blocks(x, factor)


def newton_polish(problem: GroupLassoProblem, beta: np.ndarray,
                  max_steps: int = 30) -> np.ndarray | None:
    """Solve the support equations by Newton's method from ``beta``.

    The support is the set of nonzero blocks of ``beta``; inactive blocks
    stay at zero. Returns ``None`` when a block collapses or the iteration
    stalls. A singular Jacobian (dependent block images) is handled with a
    least-squares step, which moves within the solution set.
    """
    support = block_support(beta, problem.partition)
    if not support.blocks:
        return None
    sub = support.restricted_partition()
    idx = support.indices
    XI = problem.X[:, idx]
    G = XI.T @ XI
    c = XI.T @ problem.y
    b = beta[idx].copy()
    lam = problem.lam

    def residual(b):
        norms = sub.norms(b)
        return G @ b - c + lam * sub.scale_blocks(b, 1.0 / norms)

    g = residual(b)
    best = float(np.abs(g).max())
    for _ in range(max_steps):
        if best <= 1e-15 * max(1.0, lam):
            break
        M = G + lam * delta_P_matrix(b, sub)
        accepted = False
        # Cholesky can "succeed" on a numerically singular M and return a huge
        # step along its kernel; fall back to least squares when it does
        for method in ("cholesky", "lstsq"):
            try:
                if method == "cholesky":
                    step = scipy.linalg.cho_solve(scipy.linalg.cho_factor(M), g)
                else:
                    step = np.linalg.lstsq(M, g, rcond=None)[0]
            except np.linalg.LinAlgError:
                continue
            cand = b - step
            if np.any(sub.norms(cand) <= 1e-300):
                continue
            g_new = residual(cand)
            err = float(np.abs(g_new).max())
            if np.isfinite(err) and err < best:
                b, g, best = cand, g_new, err
                accepted = True
                break
        if not accepted:
            break
    if not np.all(np.isfinite(b)):
        return None
    return support.embed(b)


def solve(problem: GroupLassoProblem, tol: float = DEFAULT_TOL,
          max_iter: int = DEFAULT_MAX_ITER, beta_init: np.ndarray | None = None,
          eps_supp: float = DEFAULT_EPS_SUPP, check_every: int = 10,
          polish: bool = True, record_history: bool = False
          ) -> GroupLassoSolution:
    """Compute a group Lasso minimizer certified by its KKT residual.

    Parameters
    ----------
    problem : GroupLassoProblem
    tol : float
        Target for :func:`kkt_check` on the returned (truncated) solution.
    max_iter : int
        Budget of proximal gradient iterations.
    beta_init : array, optional
        Starting point; zero by default.
    eps_supp : float
        Relative threshold below which blocks are truncated to zero.
    check_every : int
        Iterations between certificate checks and Newton polishing attempts.
    polish : bool
        Disable to run the plain accelerated scheme.
    record_history : bool
        Keep the objective value after every iteration.

    Raises
    ------
    NonConvergenceError
        If the residual is still above ``tol`` after ``max_iter`` iterations.
    """
    if tol <= 0 or max_iter < 1:
        raise ValueError("tol must be positive and max_iter at least 1")
    X, y, lam, part = problem.X, problem.y, problem.lam, problem.partition
    Xty = X.T @ y

    def smooth(b):
        r = y - X @ b
        return 0.5 * float(r @ r)

    def finish(b, it, hist):
        sup = block_support(b, part, eps_supp, relative=True)
        b = truncate(b, sup)
        return GroupLassoSolution(
            beta=b, support=sup, kkt_residual=kkt_check(problem, b),
            objective=objective(problem, b), n_iter=it,
            history=tuple(hist))

    x = (np.zeros(problem.p) if beta_init is None
         else np.array(beta_init, dtype=float))
    fx = objective(problem, x)
    hist = [fx] if record_history else []
    if kkt_check(problem, x, eps_supp) <= tol:
        return finish(x, 0, hist)
    if polish and beta_init is not None and np.any(x):
        cand = newton_polish(problem, x)
        if cand is not None and kkt_check(problem, cand, eps_supp) <= tol:
            if record_history:
                hist.append(objective(problem, cand))
            return finish(cand, 0, hist)

    L = max(spectral_norm_sq(X), 1e-300)
    yk, t = x.copy(), 1.0
    last_support = None
    best_res = np.inf
    for it in range(1, max_iter + 1):
        grad = X.T @ (X @ yk) - Xty
        f_y = smooth(yk)
        while True:
            z = block_soft_threshold_vec(yk - grad / L, lam / L, part)
            d = z - yk
            if smooth(z) <= f_y + grad @ d + 0.5 * L * (d @ d) * (1 + 1e-12):
                break
            L *= 2.0
        fz = objective(problem, z)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        if fz <= fx:
            yk = z + ((t - 1.0) / t_next) * (z - x)
            x, fx = z, fz
        else:
            # monotone variant: keep x, restart momentum
            yk = x + (t / t_next) * (z - x)
            t_next = 1.0
        t = t_next
        if record_history:
            hist.append(fx)

        if it % check_every:
            continue
        res = kkt_check(problem, x, eps_supp)
        best_res = min(best_res, res)
        if res <= tol:
            return finish(x, it, hist)
        sup = block_support(x, part).blocks
        if polish and sup and sup == last_support:
            cand = newton_polish(problem, x)
            if cand is not None:
                f_c = objective(problem, cand)
                if (kkt_check(problem, cand, eps_supp) <= tol
                        and f_c <= fx + 1e-12 * max(1.0, abs(fx))):
                    if record_history:
                        hist.append(f_c)
                    return finish(cand, it, hist)
        last_support = sup
    raise NonConvergenceError(
        f"KKT residual {best_res:.3e} above tol {tol:.1e} after {max_iter} "
        "iterations", x, float(kkt_check(problem, x, eps_supp)))


def predict(problem: GroupLassoProblem, beta: np.ndarray) -> np.ndarray:
    return problem.X @ beta
