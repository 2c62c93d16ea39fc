import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from glsure import (BlockPartition, GroupLassoProblem, block_soft_threshold,
                    dof_orthogonal, solve, sure_orthogonal)
from glsure.orthogonal import block_soft_threshold_jacobian

from conftest import random_partition


def test_boundary_is_inactive():
    part = BlockPartition.contiguous([2])
    out = block_soft_threshold(np.array([3.0, 4.0]), part, 5.0)
    assert not np.any(out)


def test_three_four_five():
    part = BlockPartition.contiguous([2])
    np.testing.assert_allclose(
        block_soft_threshold(np.array([3.0, 4.0]), part, 1.0), [2.4, 3.2])


def test_small_lambda_limit(rng):
    part = BlockPartition.contiguous([2, 3])
    y = rng.standard_normal(5)
    np.testing.assert_allclose(block_soft_threshold(y, part, 1e-12), y,
                               atol=1e-11)


def test_output_norms(rng):
    part = BlockPartition.contiguous([1, 2, 3, 4])
    y = rng.standard_normal(10)
    out = block_soft_threshold(y, part, 0.8)
    np.testing.assert_allclose(part.norms(out),
                               np.maximum(0, part.norms(y) - 0.8), atol=1e-15)


def test_dof_singletons_counts_survivors(rng):
    part = BlockPartition.contiguous([1] * 12)
    y = rng.standard_normal(12)
    assert dof_orthogonal(y, part, 0.7) == np.sum(np.abs(y) > 0.7)


def test_dof_single_inactive_block():
    part = BlockPartition.contiguous([3])
    assert dof_orthogonal(np.array([0.1, 0.2, 0.2]), part, 1.0) == 0.0


def test_dof_matches_per_block_chain(rng):
    # sum over active blocks of 1 + (|b| - 1)(1 - lam/||y_b||)
    for _ in range(20):
        part = random_partition(rng, 20)
        y = rng.standard_normal(part.p) * 2
        lam = rng.uniform(0.2, 3.0)
        chain = 0.0
        for blk in part.blocks:
            r = np.linalg.norm(y[list(blk)])
            if r > lam:
                chain += 1 + (len(blk) - 1) * (1 - lam / r)
        assert dof_orthogonal(y, part, lam) == pytest.approx(chain, abs=1e-12)


def test_sure_large_lambda(rng):
    part = BlockPartition.contiguous([2, 3])
    y = rng.standard_normal(5)
    lam = part.norms(y).max() + 0.1
    assert sure_orthogonal(y, part, lam, 0.7) == pytest.approx(
        -5 * 0.49 + y @ y)


def test_sure_zero_sigma_is_residual(rng):
    for _ in range(20):
        part = random_partition(rng, 15)
        y = rng.standard_normal(part.p) * 2
        lam = rng.uniform(0.2, 3.0)
        r = y - block_soft_threshold(y, part, lam)
        assert sure_orthogonal(y, part, lam, 0.0) == pytest.approx(r @ r,
                                                                   abs=1e-12)


def test_sure_singletons_matches_literal_formula(rng):
    part = BlockPartition.contiguous([1] * 10)
    y = rng.standard_normal(10) * 2
    lam, s = 0.9, 0.6
    keep = np.abs(y) > lam
    literal = (-10 * s**2 + (2 * s**2 + lam**2) * keep.sum()
               + np.sum(y[~keep] ** 2))
    assert sure_orthogonal(y, part, lam, s) == pytest.approx(literal)


def test_is_proximal_map_of_group_norm(rng):
    for _ in range(10):
        part = random_partition(rng, 12)
        y = rng.standard_normal(part.p) * 2
        lam = rng.uniform(0.2, 2.0)
        sol = solve(GroupLassoProblem(y, np.eye(part.p), part, lam), tol=1e-12)
        np.testing.assert_allclose(block_soft_threshold(y, part, lam),
                                   sol.beta, atol=1e-8)


def test_jacobian_finite_differences(rng):
    part = BlockPartition.contiguous([3, 2, 4])
    y = rng.standard_normal(9) * 2
    lam = 0.5
    J = block_soft_threshold_jacobian(y, part, lam)
    h = 1e-6
    fd = np.column_stack([
        (block_soft_threshold(y + h * e, part, lam)
         - block_soft_threshold(y - h * e, part, lam)) / (2 * h)
        for e in np.eye(9)])
    np.testing.assert_allclose(fd, J, atol=1e-5)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 10.0))
def test_dof_within_bounds(seed, lam):
    rng = np.random.default_rng(seed)
    part = random_partition(rng, 10)
    y = rng.standard_normal(part.p) * 3
    assert 0.0 <= dof_orthogonal(y, part, lam) <= part.p
