"""Sparse matrices of small square dense blocks (block-row compressed layout).

The KKT system couples three unknowns per (node, time level) pair, so its
natural storage is 3x3 blocks; the forward solver reuses the same machinery
with block size 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


@dataclass
class BlockSparseMatrix:
    """Block-CSR matrix: data[(p, :, :)] is the block in block-row r for
    indices[p], indptr as in CSR.  Column indices are sorted and unique per
    row and every row carries its diagonal block."""

    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray  # (nnzb, b, b)

    def __post_init__(self):
        self.indptr = np.asarray(self.indptr, dtype=np.int64)
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.data = np.ascontiguousarray(self.data, dtype=np.float64)

    @property
    def block_size(self) -> int:
        return self.data.shape[1]

    @property
    def num_block_rows(self) -> int:
        return len(self.indptr) - 1

    @property
    def shape(self) -> tuple[int, int]:
        n = self.num_block_rows * self.block_size
        return (n, n)

    @property
    def nnz_blocks(self) -> int:
        return self.data.shape[0]

    @classmethod
    def from_csr(cls, mat: sp.spmatrix, block_size: int) -> "BlockSparseMatrix":
        """Convert a scalar sparse matrix with dimension divisible by the
        block size; missing diagonal blocks are materialized as zeros."""
        n = mat.shape[0]
        if n != mat.shape[1] or n % block_size:
            raise ValueError("matrix not square or not block-divisible")
        nb = n // block_size
        # append explicit zeros on the scalar diagonal so every diagonal
        # block is structurally present (sparse addition would prune them)
        coo = sp.coo_matrix(mat)
        diag = np.arange(n)
        rows = np.concatenate([coo.row, diag])
        cols = np.concatenate([coo.col, diag])
        vals = np.concatenate([coo.data, np.zeros(n)])
        padded = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
        bsr = sp.bsr_matrix(padded, blocksize=(block_size, block_size))
        bsr.sort_indices()
        return cls(indptr=bsr.indptr, indices=bsr.indices, data=bsr.data)

    def to_bsr(self) -> sp.bsr_matrix:
        n = self.shape[0]
        return sp.bsr_matrix(
            (self.data, self.indices.astype(np.int32),
             self.indptr.astype(np.int32)), shape=(n, n))

    def to_csr(self) -> sp.csr_matrix:
        return self.to_bsr().tocsr()

    def to_dense(self) -> np.ndarray:
        return self.to_bsr().toarray()

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.to_bsr() @ x

    def diag_block_positions(self) -> np.ndarray:
        """Position of the diagonal block within each block row."""
        pos = np.empty(self.num_block_rows, dtype=np.int64)
        for r in range(self.num_block_rows):
            lo, hi = self.indptr[r], self.indptr[r + 1]
            p = np.searchsorted(self.indices[lo:hi], r)
            if p == hi - lo or self.indices[lo + p] != r:
                raise ValueError(f"missing diagonal block in row {r}")
            pos[r] = lo + p
        return pos
