import numpy as np
import pytest

from glsure import BlockPartition, GroupLassoProblem


def random_partition(rng, p_min, max_size=7, n_blocks=None):
    """Contiguous partition with random block sizes in 1..max_size."""
    sizes = []
    while sum(sizes) < p_min if n_blocks is None else len(sizes) < n_blocks:
        sizes.append(int(rng.integers(1, max_size + 1)))
    return BlockPartition.contiguous(sizes)


def gaussian_instance(rng, n, sizes, lam_frac=0.3, n_active=2, noise=0.3,
                      X=None):
    """Planted sparse problem with lam = lam_frac * lambda_max."""
    part = BlockPartition.contiguous(sizes)
    if X is None:
        X = rng.standard_normal((n, part.p))
    beta0 = np.zeros(part.p)
    for b in rng.choice(len(part), size=min(n_active, len(part)), replace=False):
        idx = list(part.blocks[b])
        beta0[idx] = rng.standard_normal(len(idx))
    y = X @ beta0 + noise * rng.standard_normal(n)
    lam_max = float(part.norms(X.T @ y).max())
    return GroupLassoProblem(y, X, part, lam_frac * lam_max)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
