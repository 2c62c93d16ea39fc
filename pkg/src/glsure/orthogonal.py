"""Closed forms for the identity design: block soft thresholding, DOF, SURE."""

from __future__ import annotations

import numpy as np

from .blocks import BlockPartition


def block_soft_threshold(y: np.ndarray, partition: BlockPartition,
                         lam: float) -> np.ndarray:
    """Shrink each block of ``y`` toward zero by ``lam`` in Euclidean norm.

    Blocks with ``||y_b|| <= lam`` become exactly zero.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    norms = partition.norms(y)
    factor = np.zeros_like(norms)
    keep = norms > lam
    factor[keep] = 1.0 - lam / norms[keep]
    return partition.scale_blocks(y, factor)


def _active(y, partition, lam):
    norms = partition.norms(y)
    keep = norms > lam
    return norms, keep


def dof_orthogonal(y: np.ndarray, partition: BlockPartition,
                   lam: float) -> float:
    """``|I| - lam * sum_{b in I} (|b| - 1) / ||y_b||`` over blocks above lam."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    norms, keep = _active(y, partition, lam)
    sizes = partition.sizes[keep]
    return float(sizes.sum() - lam * np.sum((sizes - 1) / norms[keep]))


def sure_orthogonal(y: np.ndarray, partition: BlockPartition, lam: float,
                    sigma: float) -> float:
    """SURE of block soft thresholding.

    ``-n s^2 + 2 s^2 |I| + lam^2 #I + sum_{b not in I} ||y_b||^2
    - 2 s^2 lam sum_{b in I} (|b| - 1)/||y_b||`` where ``|I|`` counts active
    coefficients and ``#I`` active blocks: every active block leaves a
    residual of norm exactly ``lam``. With singleton blocks the two counts
    coincide. ``sigma = 0`` gives the residual ``||y - mu_hat||^2``.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    norms, keep = _active(y, partition, lam)
    sizes = partition.sizes[keep]
    n = partition.p
    s2 = sigma**2
    return float(-n * s2 + 2 * s2 * sizes.sum() + lam**2 * keep.sum()
                 + np.sum(norms[~keep] ** 2)
                 - 2 * s2 * lam * np.sum((sizes - 1) / norms[keep]))


def block_soft_threshold_jacobian(y: np.ndarray, partition: BlockPartition,
                                  lam: float) -> np.ndarray:
    """Dense derivative of :func:`block_soft_threshold` at ``y``.

    On an active block it maps ``a`` to ``a - lam/||y_b|| * Proj_{y_b^perp} a``;
    inactive blocks have zero derivative.
    """
    n = partition.p
    J = np.zeros((n, n))
    norms = partition.norms(y)
    for blk, r in zip(partition.blocks, norms):
        if r <= lam:
            continue
        idx = np.asarray(blk)
        u = y[idx] / r
        proj = np.eye(len(idx)) - np.outer(u, u)
        J[np.ix_(idx, idx)] = np.eye(len(idx)) - (lam / r) * proj
    return J
