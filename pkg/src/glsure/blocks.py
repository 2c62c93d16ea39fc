"""Block partitions, the l1-l2 norm and the block-diagonal operators.

All vectors are plain 1-d numpy arrays; a :class:`BlockPartition` carries the
group structure. Restricted vectors (``x_I``) are laid out block after block
in the order given by :attr:`BlockSupport.indices`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class BlockPartition:
    """Disjoint blocks of coefficient indices covering ``0..p-1``.

    Parameters
    ----------
    blocks : sequence of sequences of int
        Index sets. Order is kept as given and defines block ids.
    p : int, optional
        Total number of coefficients. Inferred from ``blocks`` if omitted.
    """

    blocks: tuple[tuple[int, ...], ...]
    p: int = -1
    _order: np.ndarray = field(init=False, repr=False, compare=False)
    _starts: np.ndarray = field(init=False, repr=False, compare=False)
    _sizes: np.ndarray = field(init=False, repr=False, compare=False)

    def __init__(self, blocks: Iterable[Iterable[int]], p: int | None = None):
        blocks = tuple(tuple(int(i) for i in b) for b in blocks)
        if not blocks:
            raise ValueError("a partition needs at least one block")
        if any(len(b) == 0 for b in blocks):
            raise ValueError("blocks must be nonempty")
        flat = [i for b in blocks for i in b]
        if p is None:
            p = max(flat) + 1
        if sorted(flat) != list(range(p)):
            raise ValueError(
                f"blocks must be disjoint and cover 0..{p - 1} exactly")
        sizes = np.array([len(b) for b in blocks], dtype=np.intp)
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "p", int(p))
        object.__setattr__(self, "_order", np.array(flat, dtype=np.intp))
        object.__setattr__(self, "_sizes", sizes)
        object.__setattr__(
            self, "_starts", np.concatenate(([0], np.cumsum(sizes)[:-1])))

    @classmethod
    def contiguous(cls, sizes: Sequence[int]) -> BlockPartition:
        """Partition into consecutive index ranges of the given sizes."""
        edges = np.concatenate(([0], np.cumsum(sizes)))
        return cls([range(a, b) for a, b in zip(edges[:-1], edges[1:])])

    @classmethod
    def from_json(cls, text: str) -> BlockPartition:
        return cls(json.loads(text))

    def to_json(self) -> str:
        return json.dumps([list(b) for b in self.blocks])

    def __len__(self) -> int:
        return len(self.blocks)

    @property
    def sizes(self) -> np.ndarray:
        return self._sizes

    def norms(self, x: np.ndarray) -> np.ndarray:
        """Euclidean norm of every block of ``x``."""
        a = np.abs(np.asarray(x, dtype=float)[self._order])
        # scale by the block max so tiny or huge entries do not under/overflow
        scale = np.maximum.reduceat(a, self._starts)
        safe = np.where(scale > 0, scale, 1.0)
        a = a / np.repeat(safe, self._sizes)
        return scale * np.sqrt(np.add.reduceat(a * a, self._starts))

    def group_norm(self, x: np.ndarray) -> float:
        """The l1-l2 norm: sum of the block norms."""
        return float(self.norms(x).sum())

    def scale_blocks(self, x: np.ndarray, factors: np.ndarray) -> np.ndarray:
        """Multiply each block of ``x`` by the matching entry of ``factors``."""
        out = np.empty(self.p)
        out[self._order] = np.asarray(x, dtype=float)[self._order] * np.repeat(
            factors, self._sizes)
        return out

    def block_sum(self, v: np.ndarray) -> np.ndarray:
        """Sum of the entries of ``v`` inside each block."""
        return np.add.reduceat(np.asarray(v, dtype=float)[self._order],
                               self._starts)


@dataclass(frozen=True)
class BlockVector:
    """A coefficient vector tied to its partition."""

    values: np.ndarray
    partition: BlockPartition

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.partition.p,):
            raise ValueError(
                f"expected a vector of length {self.partition.p}, "
                f"got shape {values.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def block(self, b: int) -> np.ndarray:
        return self.values[list(self.partition.blocks[b])]

    def block_norms(self) -> np.ndarray:
        return self.partition.norms(self.values)

    def group_norm(self) -> float:
        return self.partition.group_norm(self.values)


@dataclass(frozen=True)
class BlockSupport:
    """Active blocks of a vector, stored as block ids in partition order."""

    blocks: tuple[int, ...]
    partition: BlockPartition = field(repr=False)

    @property
    def indices(self) -> np.ndarray:
        """Coefficient indices of the active blocks, block after block."""
        if not self.blocks:
            return np.zeros(0, dtype=np.intp)
        return np.concatenate(
            [np.asarray(self.partition.blocks[b], dtype=np.intp)
             for b in self.blocks])

    @property
    def size(self) -> int:
        """Number of active coefficients, i.e. the sum of block sizes."""
        return int(sum(len(self.partition.blocks[b]) for b in self.blocks))

    @property
    def complement(self) -> tuple[int, ...]:
        active = set(self.blocks)
        return tuple(b for b in range(len(self.partition)) if b not in active)

    def __len__(self) -> int:
        return len(self.blocks)

    def restricted_partition(self) -> BlockPartition:
        """Contiguous partition of ``0..size-1`` matching :attr:`indices`."""
        return BlockPartition.contiguous(
            [len(self.partition.blocks[b]) for b in self.blocks])

    def restrict(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float)[self.indices]

    def embed(self, x_I: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`restrict`, zero outside the support."""
        out = np.zeros(self.partition.p)
        out[self.indices] = x_I
        return out


def support_threshold(x: np.ndarray, eps_supp: float) -> float:
    """Absolute zero threshold for ``eps_supp`` taken relative to max|x|."""
    scale = float(np.max(np.abs(x))) if np.size(x) else 0.0
    return eps_supp * scale if scale > 0 else eps_supp


def block_support(x: np.ndarray, partition: BlockPartition,
                  eps_supp: float = 0.0, relative: bool = False
                  ) -> BlockSupport:
    """Blocks whose Euclidean norm exceeds ``eps_supp``.

    With ``relative=True`` the threshold is ``eps_supp * max|x|``.
    """
    x = np.asarray(x, dtype=float)
    thresh = support_threshold(x, eps_supp) if relative else eps_supp
    norms = partition.norms(x)
    return BlockSupport(tuple(int(b) for b in np.flatnonzero(norms > thresh)),
                        partition)


def truncate(x: np.ndarray, support: BlockSupport) -> np.ndarray:
    """Copy of ``x`` with every block outside ``support`` set to zero."""
    return support.embed(support.restrict(x))


def normalize_blocks(x_I: np.ndarray, partition: BlockPartition) -> np.ndarray:
    """Rescale every block of ``x_I`` to unit Euclidean norm."""
    norms = partition.norms(x_I)
    if np.any(norms == 0):
        raise ZeroDivisionError("cannot normalize a zero block")
    return partition.scale_blocks(x_I, 1.0 / norms)


def apply_delta_P(x_I: np.ndarray, v: np.ndarray,
                  partition: BlockPartition) -> np.ndarray:
    """Apply the block-diagonal operator v_b -> (v_b - <u_b, v_b> u_b)/|x_b|.

    ``u_b`` is the unit direction of ``x_b``, so each block of ``v`` is
    projected onto the orthocomplement of ``x_b`` and scaled by ``1/|x_b|``.
    """
    norms = partition.norms(x_I)
    if np.any(norms == 0):
        raise ZeroDivisionError("delta_P is undefined on a zero block")
    u = partition.scale_blocks(x_I, 1.0 / norms)
    v = np.asarray(v, dtype=float)
    proj = v - partition.scale_blocks(u, partition.block_sum(u * v))
    return partition.scale_blocks(proj, 1.0 / norms)


def delta_P_matrix(x_I: np.ndarray, partition: BlockPartition) -> np.ndarray:
    """Dense matrix of :func:`apply_delta_P`."""
    k = partition.p
    out = np.zeros((k, k))
    for blk in partition.blocks:
        idx = np.asarray(blk)
        xb = x_I[idx]
        r = np.linalg.norm(xb)
        if r == 0:
            raise ZeroDivisionError("delta_P is undefined on a zero block")
        u = xb / r
        out[np.ix_(idx, idx)] = (np.eye(len(idx)) - np.outer(u, u)) / r
    return out
