"""Point-block incomplete LU factorization with level-of-fill ILU(k).

The symbolic phase runs on the block graph (levels counted per block), the
numeric phase factorizes in block form with dense partial-pivoting inversion
of the diagonal blocks only; there is no pivoting across blocks.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np
from numba import njit

from .blocksparse import BlockSparseMatrix


class SingularBlockError(RuntimeError):
    def __init__(self, row: int):
        super().__init__(f"numerically singular diagonal block in block row {row}")
        self.row = row


def symbolic_ilu(indptr: np.ndarray, indices: np.ndarray, k: int):
    """Level-of-fill pattern of ILU(k) on a sparse graph with sorted rows.

    Returns (indptr, indices) of the filled pattern.
    """
    if k == 0:
        return indptr.copy(), indices.copy()
    n = len(indptr) - 1
    upper: list[list[tuple[int, int]]] = [None] * n  # per-row (col, level), col > row
    out_rows: list[np.ndarray] = []
    for i in range(n):
        cols = indices[indptr[i]:indptr[i + 1]]
        lev = {int(j): 0 for j in cols}
        heap = [int(j) for j in cols if j < i]
        heapq.heapify(heap)
        seen = set()
        while heap:
            kk = heapq.heappop(heap)
            if kk in seen:
                continue
            seen.add(kk)
            lk = lev[kk]
            if lk >= k:
                continue
            for j, lkj in upper[kk]:
                l = lk + lkj + 1
                if l > k:
                    continue
                old = lev.get(j)
                if old is None or old > l:
                    lev[j] = l
                    if old is None and j < i:
                        heapq.heappush(heap, j)
        row_cols = np.array(sorted(lev), dtype=np.int64)
        out_rows.append(row_cols)
        upper[i] = [(j, lev[j]) for j in row_cols if j > i]
    new_indptr = np.zeros(n + 1, dtype=np.int64)
    new_indptr[1:] = np.cumsum([len(r) for r in out_rows])
    new_indices = np.concatenate(out_rows) if out_rows else np.empty(0, dtype=np.int64)
    return new_indptr, new_indices


@njit(cache=True)
def _invert_block(a, out):
    """Gauss-Jordan inverse with partial pivoting; returns False if singular."""
    b = a.shape[0]
    w = np.empty((b, 2 * b))
    w[:, :b] = a
    w[:, b:] = 0.0
    for i in range(b):
        w[i, b + i] = 1.0
    for col in range(b):
        piv = col
        best = abs(w[col, col])
        for r in range(col + 1, b):
            if abs(w[r, col]) > best:
                best = abs(w[r, col])
                piv = r
        if best < 1e-300:
            return False
        if piv != col:
            for c in range(2 * b):
                tmp = w[col, c]
                w[col, c] = w[piv, c]
                w[piv, c] = tmp
        d = w[col, col]
        for c in range(2 * b):
            w[col, c] /= d
        for r in range(b):
            if r != col:
                m = w[r, col]
                if m != 0.0:
                    for c in range(2 * b):
                        w[r, c] -= m * w[col, c]
    out[:, :] = w[:, b:]
    return True


@njit(cache=True)
def _matmul_into(a, bmat, out):
    b = a.shape[0]
    for i in range(b):
        for j in range(b):
            s = 0.0
            for l in range(b):
                s += a[i, l] * bmat[l, j]
            out[i, j] = s


@njit(cache=True)
def _bsearch(arr, lo, hi, key):
    while lo < hi:
        mid = (lo + hi) // 2
        v = arr[mid]
        if v == key:
            return mid
        if v < key:
            lo = mid + 1
        else:
            hi = mid
    return -1


@njit(cache=True)
def _numeric_factor(indptr, indices, diag_pos, data, diag_inv):
    """In-place IKJ block factorization.  Strictly-lower blocks become L,
    upper blocks become U; diag_inv holds the inverted U diagonal.
    Returns -1 on success, else the offending block row."""
    n = indptr.size - 1
    b = data.shape[1]
    scratch = np.empty((b, b))
    for i in range(n):
        for pp in range(indptr[i], diag_pos[i]):
            kk = indices[pp]
            _matmul_into(data[pp], diag_inv[kk], scratch)
            data[pp] = scratch
            for qq in range(diag_pos[kk] + 1, indptr[kk + 1]):
                j = indices[qq]
                pos = _bsearch(indices, indptr[i], indptr[i + 1], j)
                if pos >= 0:
                    _matmul_into(data[pp], data[qq], scratch)
                    data[pos] -= scratch
        ok = _invert_block(data[diag_pos[i]], diag_inv[i])
        if not ok:
            return i
    return -1


@njit(cache=True)
def _solve(indptr, indices, diag_pos, data, diag_inv, rhs, out):
    """out = U^{-1} L^{-1} rhs with unit-diagonal block L."""
    n = indptr.size - 1
    b = data.shape[1]
    z = np.empty((n, b))
    for i in range(n):
        acc = rhs[i].copy()
        for pp in range(indptr[i], diag_pos[i]):
            kk = indices[pp]
            blk = data[pp]
            for r in range(b):
                s = 0.0
                for c in range(b):
                    s += blk[r, c] * z[kk, c]
                acc[r] -= s
        z[i] = acc
    for i in range(n - 1, -1, -1):
        acc = z[i].copy()
        for pp in range(diag_pos[i] + 1, indptr[i + 1]):
            j = indices[pp]
            blk = data[pp]
            for r in range(b):
                s = 0.0
                for c in range(b):
                    s += blk[r, c] * out[j, c]
                acc[r] -= s
        dinv = diag_inv[i]
        for r in range(b):
            s = 0.0
            for c in range(b):
                s += dinv[r, c] * acc[c]
            out[i, r] = s


@dataclass
class BlockIluFactors:
    indptr: np.ndarray
    indices: np.ndarray
    diag_pos: np.ndarray
    data: np.ndarray       # L (strict lower, unit diag implicit) and U blocks
    diag_inv: np.ndarray   # inverted U diagonal blocks
    fill_level: int

    @property
    def block_size(self) -> int:
        return self.data.shape[1]

    @property
    def nnz_blocks(self) -> int:
        return self.data.shape[0]

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        b = self.block_size
        n = len(self.indptr) - 1
        r = np.ascontiguousarray(rhs, dtype=np.float64).reshape(n, b)
        out = np.empty_like(r)
        _solve(self.indptr, self.indices, self.diag_pos, self.data,
               self.diag_inv, r, out)
        return out.reshape(rhs.shape)


def block_ilu(mat: BlockSparseMatrix, k: int) -> BlockIluFactors:
    """ILU(k) factorization of a block sparse matrix."""
    if k < 0:
        raise ValueError("fill level must be nonnegative")
    diag_pos0 = mat.diag_block_positions()
    indptr, indices = symbolic_ilu(mat.indptr, mat.indices, k)
    b = mat.block_size
    nb = mat.num_block_rows
    if k == 0:
        data = mat.data.copy()
    else:
        data = np.zeros((len(indices), b, b))
        # scatter original blocks into the filled pattern
        for r in range(nb):
            src = slice(mat.indptr[r], mat.indptr[r + 1])
            dst_lo = indptr[r]
            pos = np.searchsorted(indices[indptr[r]:indptr[r + 1]],
                                  mat.indices[src]) + dst_lo
            data[pos] = mat.data[src]
    diag_pos = np.empty(nb, dtype=np.int64)
    for r in range(nb):
        p = np.searchsorted(indices[indptr[r]:indptr[r + 1]], r)
        diag_pos[r] = indptr[r] + p
    diag_inv = np.empty((nb, b, b))
    bad = _numeric_factor(indptr, indices, diag_pos, data, diag_inv)
    if bad >= 0:
        raise SingularBlockError(int(bad))
    return BlockIluFactors(indptr=indptr, indices=indices, diag_pos=diag_pos,
                           data=data, diag_inv=diag_inv, fill_level=k)
