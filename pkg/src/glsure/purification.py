"""Reduce a minimizer to one whose active block images are independent.

If ``sum_i m_i X_{b_i} beta_{b_i} = 0`` for some nonzero ``m``, rescaling
every active block by ``1 + t m_i`` leaves ``X beta`` and the l1-l2 norm
unchanged, so the whole segment stays optimal. Pushing ``t`` to the first
value that zeroes a block yields a minimizer with a strictly smaller support.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .blocks import block_support
from .sensitivity import DEFAULT_EPS_RANK, check_assumption_A, image_matrix
from .solver import (DEFAULT_EPS_SUPP, DEFAULT_TOL, GroupLassoProblem,
                     GroupLassoSolution, kkt_check, objective)


class PurificationError(RuntimeError):
    pass


def dependence_step(problem: GroupLassoProblem, beta: np.ndarray,
                    eps_supp: float = DEFAULT_EPS_SUPP) -> np.ndarray:
    """One rescaling along the weakest dependence of the block images."""
    part = problem.partition
    support = block_support(beta, part)
    A = image_matrix(problem.X, part, beta)
    # right singular vector of the smallest singular value; when the images
    # outnumber the rows the trailing rows of vh span the exact kernel
    _, _, vh = np.linalg.svd(A, full_matrices=True)
    m = vh[-1]
    nz = np.flatnonzero(np.abs(m) > 1e-14 * np.abs(m).max())
    crossings = -1.0 / m[nz]
    t = crossings[np.argmin(np.abs(crossings))]
    factors = 1.0 + t * m
    factors[nz[np.argmin(np.abs(crossings))]] = 0.0
    factors[np.abs(factors) <= eps_supp] = 0.0
    full = np.zeros(len(part))
    full[list(support.blocks)] = factors
    return part.scale_blocks(beta, full)


def purify(problem: GroupLassoProblem, solution: GroupLassoSolution,
           eps_rank: float = DEFAULT_EPS_RANK, tol: float = DEFAULT_TOL,
           eps_supp: float = DEFAULT_EPS_SUPP) -> GroupLassoSolution:
    """Return a minimizer with the same prediction whose images are independent.

    Each step removes at least one active block, so at most ``#I`` steps run.
    The number of steps taken is stored in ``purification_steps``.

    Raises
    ------
    PurificationError
        If the input is not certified optimal at ``tol``, or a step fails to
        shrink the support while the dependence persists.
    """
    if solution.kkt_residual > tol:
        raise PurificationError(
            f"input KKT residual {solution.kkt_residual:.3e} exceeds {tol:.1e}")
    part = problem.partition
    beta = solution.beta
    steps = 0
    max_steps = len(solution.support)
    while not check_assumption_A(problem.X, part, beta, eps_rank)[0]:
        if steps >= max_steps:
            raise PurificationError("dependence persists after #I steps")
        before = len(block_support(beta, part))
        beta = dependence_step(problem, beta, eps_supp)
        steps += 1
        if len(block_support(beta, part)) >= before:
            raise PurificationError("purification step did not shrink support")
    if steps == 0:
        return solution
    return dataclasses.replace(
        solution, beta=beta, support=block_support(beta, part),
        kkt_residual=kkt_check(problem, beta), objective=objective(problem, beta),
        purification_steps=solution.purification_steps + steps)
