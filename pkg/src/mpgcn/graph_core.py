"""Sparse adjacency storage and the normalized propagation operator."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.sparse as sp


class GraphError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    """Compressed sparse row matrix with float64 values.

    Column indices inside each row are strictly increasing.
    """

    num_rows: int
    num_cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        offs = np.asarray(self.row_offsets, dtype=np.int64)
        cols = np.asarray(self.col_indices, dtype=np.int64)
        vals = np.asarray(self.values, dtype=np.float64)
        for arr in (offs, cols, vals):
            arr.setflags(write=False)
        object.__setattr__(self, "row_offsets", offs)
        object.__setattr__(self, "col_indices", cols)
        object.__setattr__(self, "values", vals)
        self.validate()

    def validate(self) -> None:
        offs, cols = self.row_offsets, self.col_indices
        if offs.shape != (self.num_rows + 1,):
            raise GraphError(f"row_offsets has length {offs.size}, expected {self.num_rows + 1}")
        if offs[0] != 0 or np.any(np.diff(offs) < 0):
            raise GraphError("row_offsets must start at 0 and be non-decreasing")
        if offs[-1] != cols.size or cols.size != self.values.size:
            raise GraphError("row_offsets[-1], col_indices and values disagree on nnz")
        if cols.size:
            if cols.min() < 0 or cols.max() >= self.num_cols:
                raise GraphError("column index out of range")
            # strictly increasing inside a row; row starts are exempt
            step = np.diff(cols)
            row_start = np.zeros(cols.size, dtype=bool)
            row_start[offs[:-1][offs[:-1] < cols.size]] = True
            if np.any((step <= 0) & ~row_start[1:]):
                raise GraphError("column indices must be strictly increasing within each row")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.num_rows, self.num_cols)

    @property
    def nnz(self) -> int:
        return int(self.col_indices.size)

    @cached_property
    def row_ids(self) -> np.ndarray:
        """Row index of every stored entry."""
        return np.repeat(np.arange(self.num_rows, dtype=np.int64), np.diff(self.row_offsets))

    @cached_property
    def _kernel(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.values, self.col_indices, self.row_offsets), shape=self.shape, copy=False)

    @cached_property
    def T(self) -> CsrMatrix:
        return transpose(self)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.row_ids, self.col_indices] = self.values
        return out

    def __eq__(self, other):
        if not isinstance(other, CsrMatrix):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.row_offsets, other.row_offsets)
            and np.array_equal(self.col_indices, other.col_indices)
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


@dataclass(frozen=True)
class EdgeList:
    num_nodes: int
    edges: Sequence[tuple[int, int]]


def _from_coo(n_rows, n_cols, rows, cols, vals) -> CsrMatrix:
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    offsets = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n_rows), out=offsets[1:])
    return CsrMatrix(n_rows, n_cols, offsets, cols, vals)


def from_dense(a: np.ndarray) -> CsrMatrix:
    a = np.asarray(a, dtype=np.float64)
    rows, cols = np.nonzero(a)
    return _from_coo(a.shape[0], a.shape[1], rows, cols, a[rows, cols])


def build_csr(edges: EdgeList) -> CsrMatrix:
    """Symmetric 0/1 adjacency from an undirected edge list.

    Duplicate and reversed edges collapse into one entry per direction; a
    self-loop given in the input is stored once on the diagonal.
    """
    n = int(edges.num_nodes)
    pairs = np.asarray(edges.edges, dtype=np.int64).reshape(-1, 2)
    bad = np.flatnonzero((pairs < 0).any(axis=1) | (pairs >= n).any(axis=1))
    if bad.size:
        src, dst = pairs[bad[0]]
        raise GraphError(f"edge #{bad[0]} ({src}, {dst}) references a node id outside [0, {n})")
    both = np.concatenate([pairs, pairs[:, ::-1]])
    keys = np.unique(both[:, 0] * max(n, 1) + both[:, 1])
    rows, cols = keys // max(n, 1), keys % max(n, 1)
    return _from_coo(n, n, rows, cols, np.ones(keys.size))


def _require_square(a: CsrMatrix, what: str) -> None:
    if a.num_rows != a.num_cols:
        raise GraphError(f"{what} needs a square matrix, got {a.num_rows}x{a.num_cols}")


def add_self_loops(a: CsrMatrix) -> CsrMatrix:
    """Set every diagonal entry to 1.0, replacing any stored diagonal value."""
    _require_square(a, "add_self_loops")
    off = a.row_ids != a.col_indices
    n = a.num_rows
    diag = np.arange(n, dtype=np.int64)
    rows = np.concatenate([a.row_ids[off], diag])
    cols = np.concatenate([a.col_indices[off], diag])
    vals = np.concatenate([a.values[off], np.ones(n)])
    return _from_coo(n, n, rows, cols, vals)


def symmetric_normalize(a_hat: CsrMatrix) -> CsrMatrix:
    """Return D^-1/2 A D^-1/2 with D the diagonal of row sums of ``a_hat``."""
    _require_square(a_hat, "symmetric_normalize")
    if np.any(a_hat.values < 0):
        raise GraphError("symmetric_normalize expects non-negative values")
    deg = np.zeros(a_hat.num_rows)
    np.add.at(deg, a_hat.row_ids, a_hat.values)
    if np.any(deg <= 0):
        node = int(np.flatnonzero(deg <= 0)[0])
        raise GraphError(f"node {node} has zero degree; add self-loops before normalizing")
    inv_sqrt = 1.0 / np.sqrt(deg)
    vals = inv_sqrt[a_hat.row_ids] * a_hat.values * inv_sqrt[a_hat.col_indices]
    return CsrMatrix(a_hat.num_rows, a_hat.num_cols, a_hat.row_offsets, a_hat.col_indices, vals)


def normalized_adjacency(a: CsrMatrix) -> CsrMatrix:
    return symmetric_normalize(add_self_loops(a))


def transpose(a: CsrMatrix) -> CsrMatrix:
    return _from_coo(a.num_cols, a.num_rows, a.col_indices.copy(), a.row_ids.copy(), a.values.copy())


def spmm(a: CsrMatrix, x: np.ndarray) -> np.ndarray:
    """Sparse-dense product ``a @ x``.

    Each output row is summed left to right over the stored entries of the
    row, so results are reproducible bit for bit.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != a.num_cols:
        raise GraphError(f"spmm shape mismatch: sparse {a.num_rows}x{a.num_cols} times dense {x.shape}")
    if a.nnz == 0:
        return np.zeros((a.num_rows, x.shape[1]))
    return np.asarray(a._kernel @ x)
