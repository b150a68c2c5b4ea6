"""Left-looking sparse LU with threshold partial pivoting.

Column ``k`` of the factors is obtained by a sparse triangular solve with the
already computed columns of ``L`` (pattern found by depth-first search),
followed by the pivot choice. A diagonal pivot is kept whenever it is at
least ``pivot_tol`` times the largest candidate in its column, so a
symmetric fill-reducing ordering survives on near-definite matrices.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numba as nb
import numpy as np

from .linalg import CsrMatrix, row_dot, transpose, unsigned_view
from .ordering import amd_order, cholesky_fill, natural_order

__all__ = [
    "FactorStats",
    "LuFactors",
    "SingularMatrixError",
    "block_diag_lu",
    "lu_solve",
    "sparse_lu",
]


class SingularMatrixError(ArithmeticError):
    """No nonzero pivot was available at elimination step ``step``."""

    def __init__(self, step, block=None):
        self.step = step
        self.block = block
        where = f" in block {block}" if block is not None else ""
        super().__init__(f"matrix is singular: zero pivot at elimination step {step}{where}")


@dataclass(frozen=True)
class FactorStats:
    elapsed_seconds: float
    fill_nnz: int
    n: int


@dataclass(frozen=True)
class LuFactors:
    """``A[row_perm][:, col_perm] == L @ U``.

    ``L`` is unit lower triangular stored without its diagonal; the first
    entry of every row of ``U`` is its (nonzero) diagonal.
    """

    L: CsrMatrix
    U: CsrMatrix
    row_perm: np.ndarray
    col_perm: np.ndarray
    stats: FactorStats

    @property
    def n(self) -> int:
        return self.L.nrows

    @property
    def fill_nnz(self) -> int:
        return self.L.nnz + self.U.nnz

    def solve(self, b):
        return lu_solve(self, b)


@nb.njit(cache=True)
def _grow(a, need):
    if need <= a.size:
        return a
    out = np.empty(max(2 * a.size, need), dtype=a.dtype)
    out[: a.size] = a
    return out


@nb.njit(cache=True)
def _lu_kernel(n, Ap, Ai, Ax, q, tol, lnz0, unz0):
    Lp = np.zeros(n + 1, dtype=np.int64)
    Up = np.zeros(n + 1, dtype=np.int64)
    Li = np.empty(lnz0, dtype=np.int64)
    Lx = np.empty(lnz0)
    Ui = np.empty(unz0, dtype=np.int64)
    Ux = np.empty(unz0)
    pinv = np.full(n, -1, dtype=np.int64)
    x = np.zeros(n)
    xi = np.empty(n, dtype=np.int64)      # reach, filled from the back
    stack = np.empty(n, dtype=np.int64)
    pstack = np.empty(n, dtype=np.int64)
    visited = np.full(n, -1, dtype=np.int64)
    lnz = 0
    unz = 0
    for k in range(n):
        Lp[k] = lnz
        Up[k] = unz
        Li = _grow(Li, lnz + n)
        Lx = _grow(Lx, lnz + n)
        Ui = _grow(Ui, unz + n)
        Ux = _grow(Ux, unz + n)
        col = q[k]

        # pattern of L \ A(:, col): nodes reachable in the graph of L
        top = n
        for pa in range(Ap[col], Ap[col + 1]):
            start = Ai[pa]
            if visited[start] == k:
                continue
            head = 0
            stack[0] = start
            while head >= 0:
                j = stack[head]
                jnew = pinv[j]
                if visited[j] != k:
                    visited[j] = k
                    pstack[head] = Lp[jnew] if jnew >= 0 else 0
                done = True
                pend = Lp[jnew + 1] if jnew >= 0 else 0
                for p in range(pstack[head], pend):
                    i = Li[p]
                    if visited[i] == k:
                        continue
                    pstack[head] = p
                    head += 1
                    stack[head] = i
                    done = False
                    break
                if done:
                    head -= 1
                    top -= 1
                    xi[top] = j

        # numerical solve in topological order
        for pa in range(Ap[col], Ap[col + 1]):
            x[Ai[pa]] = Ax[pa]
        for px in range(top, n):
            j = xi[px]
            jj = pinv[j]
            if jj < 0:
                continue
            xj = x[j]
            for p in range(Lp[jj] + 1, Lp[jj + 1]):
                x[Li[p]] -= Lx[p] * xj

        ipiv = -1
        amax = -1.0
        for px in range(top, n):
            i = xi[px]
            if pinv[i] < 0:
                t = abs(x[i])
                if t > amax:
                    amax = t
                    ipiv = i
            else:
                Ui[unz] = pinv[i]
                Ux[unz] = x[i]
                unz += 1
        if ipiv == -1 or amax <= 0.0:
            return -(k + 1), Lp, Li, Lx, Up, Ui, Ux, pinv
        if pinv[col] < 0 and abs(x[col]) >= amax * tol:
            ipiv = col
        pivot = x[ipiv]
        Ui[unz] = k
        Ux[unz] = pivot
        unz += 1
        pinv[ipiv] = k
        Li[lnz] = ipiv
        Lx[lnz] = 1.0
        lnz += 1
        for px in range(top, n):
            i = xi[px]
            if pinv[i] < 0:
                Li[lnz] = i
                Lx[lnz] = x[i] / pivot
                lnz += 1
            x[i] = 0.0
    Lp[n] = lnz
    Up[n] = unz
    for p in range(lnz):
        Li[p] = pinv[Li[p]]
    return 0, Lp, Li[:lnz], Lx[:lnz], Up, Ui[:unz], Ux[:unz], pinv


def _csc_to_csr(n, colptr, rowind, vals, drop_diagonal):
    cols = np.repeat(np.arange(n, dtype=np.int64), np.diff(colptr))
    if drop_diagonal:
        keep = rowind != cols
        cols, rowind, vals = cols[keep], rowind[keep], vals[keep]
    # a CSC matrix is the CSR of its transpose
    t = CsrMatrix(n, n, _offsets(cols, n), rowind, vals, check=False)
    return transpose(t)


def _offsets(sorted_rows, n):
    out = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(sorted_rows, minlength=n), out=out[1:])
    return out


def sparse_lu(a: CsrMatrix, ordering=None, pivot_tol=0.1) -> LuFactors:
    """Factor ``a`` as ``A[p][:, q] = L U``.

    ``ordering`` is the column permutation ``q``; by default the approximate
    minimum degree ordering of ``pattern(A) + pattern(A^T)``. Pass the string
    ``"natural"`` for no reordering.
    """
    if a.nrows != a.ncols:
        raise ValueError(f"LU needs a square matrix, got {a.shape}")
    n = a.nrows
    t0 = time.perf_counter()
    if ordering is None:
        q = amd_order(a)
    elif isinstance(ordering, str):
        if ordering != "natural":
            raise ValueError(f"unknown ordering {ordering!r}")
        q = natural_order(n)
    else:
        q = np.ascontiguousarray(ordering, dtype=np.int64)
        if q.shape != (n,) or not np.array_equal(np.sort(q), np.arange(n)):
            raise ValueError("ordering is not a permutation")
    if not 0.0 <= pivot_tol <= 1.0:
        raise ValueError("pivot_tol must lie in [0, 1]")

    # symbolic pre-pass: exact sizes when pivots stay diagonal
    est = cholesky_fill(a, q) if n else 0
    at = transpose(a)  # CSC view of A
    status, Lp, Li, Lx, Up, Ui, Ux, pinv = _lu_kernel(
        n, at.row_offsets, at.col_indices, at.values, q, float(pivot_tol),
        max(est, 1) + n, max(est, 1) + n)
    if status < 0:
        raise SingularMatrixError(-status - 1)

    L = _csc_to_csr(n, Lp, Li, Lx, drop_diagonal=True)
    U = _csc_to_csr(n, Up, Ui, Ux, drop_diagonal=False)
    row_perm = np.empty(n, dtype=np.int64)
    row_perm[pinv] = np.arange(n, dtype=np.int64)
    elapsed = time.perf_counter() - t0
    stats = FactorStats(elapsed_seconds=elapsed, fill_nnz=L.nnz + U.nnz, n=n)
    return LuFactors(L=L, U=U, row_perm=row_perm, col_perm=q, stats=stats)


@nb.njit(cache=True)
def _lu_solve_kernel(Lro, Lci, Lv, Uro, Uci, Uv, p, q, b, x):
    n = p.size
    y = np.empty(n)
    for i in range(n):
        y[i] = b[p[i]] - row_dot(Lci, Lv, y, Lro[i], Lro[i + 1])
    for i in range(n - 1, -1, -1):
        d = Uro[i]
        y[i] = (y[i] - row_dot(Uci, Uv, y, d + np.uint64(1), Uro[i + 1])) / Uv[d]
    for i in range(n):
        x[q[i]] = y[i]


def lu_solve(f: LuFactors, b) -> np.ndarray:
    b = np.ascontiguousarray(b, dtype=np.float64)
    if b.ndim != 1 or b.size != f.n:
        raise ValueError(f"dimension mismatch: factors of order {f.n}, vector {b.size}")
    x = np.empty(f.n)
    u = unsigned_view
    _lu_solve_kernel(u(f.L.row_offsets), u(f.L.col_indices), f.L.values,
                     u(f.U.row_offsets), u(f.U.col_indices), f.U.values,
                     u(np.ascontiguousarray(f.row_perm, dtype=np.int64)),
                     u(np.ascontiguousarray(f.col_perm, dtype=np.int64)), b, x)
    return x


def block_diag_lu(blocks, ordering=None, pivot_tol=0.1):
    """Independent factorizations of square diagonal blocks.

    The total fill is ``sum(F.fill_nnz for F in result)``.
    """
    out = []
    for idx, blk in enumerate(blocks):
        if blk.nrows != blk.ncols:
            raise ValueError(f"block {idx} is not square: {blk.shape}")
        try:
            out.append(sparse_lu(blk, ordering=ordering, pivot_tol=pivot_tol))
        except SingularMatrixError as exc:
            raise SingularMatrixError(exc.step, block=idx) from None
    return out
