"""Compressed sparse row storage and the kernels built on it.

Vectors are plain one-dimensional ``float64`` numpy arrays; every index
array is ``int64``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

__all__ = [
    "BlockIndexMap",
    "CsrMatrix",
    "check_csr",
    "extract_block",
    "spmv",
    "transpose",
]

INDEX = np.int64


class CsrError(ValueError):
    """Raised when arrays do not describe a valid CSR matrix."""


@dataclass(frozen=True)
class BlockIndexMap:
    """Global layout ``[u_x | u_y | p]`` of a saddle-point vector."""

    n_ux: int
    n_uy: int
    n_p: int

    def __post_init__(self):
        if min(self.n_ux, self.n_uy, self.n_p) < 0:
            raise ValueError("block sizes must be nonnegative")

    @property
    def n_u(self) -> int:
        return self.n_ux + self.n_uy

    @property
    def n(self) -> int:
        return self.n_u + self.n_p

    @property
    def ux(self) -> slice:
        return slice(0, self.n_ux)

    @property
    def uy(self) -> slice:
        return slice(self.n_ux, self.n_u)

    @property
    def u(self) -> slice:
        return slice(0, self.n_u)

    @property
    def p(self) -> slice:
        return slice(self.n_u, self.n)

    def split(self, x):
        return x[self.u], x[self.p]


class CsrMatrix:
    """Immutable CSR matrix with sorted, duplicate-free column indices.

    Use :meth:`from_coo` for assembly-style construction (duplicates are
    summed) or the constructor when the arrays are already valid.
    """

    __slots__ = ("nrows", "ncols", "row_offsets", "col_indices", "values")

    def __init__(self, nrows, ncols, row_offsets, col_indices, values, check=True):
        self.nrows = int(nrows)
        self.ncols = int(ncols)
        self.row_offsets = np.ascontiguousarray(row_offsets, dtype=INDEX)
        self.col_indices = np.ascontiguousarray(col_indices, dtype=INDEX)
        self.values = np.ascontiguousarray(values, dtype=np.float64)
        for arr in (self.row_offsets, self.col_indices, self.values):
            arr.flags.writeable = False
        if check:
            check_csr(self)

    # construction -----------------------------------------------------

    @classmethod
    def from_coo(cls, nrows, ncols, rows, cols, vals):
        rows = np.asarray(rows, dtype=INDEX).ravel()
        cols = np.asarray(cols, dtype=INDEX).ravel()
        vals = np.asarray(vals, dtype=np.float64).ravel()
        if not (rows.size == cols.size == vals.size):
            raise CsrError("rows, cols and vals must have equal length")
        if rows.size and (rows.min() < 0 or rows.max() >= nrows):
            raise CsrError("row index out of range")
        if cols.size and (cols.min() < 0 or cols.max() >= ncols):
            raise CsrError("column index out of range")
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if rows.size:
            new = np.empty(rows.size, dtype=bool)
            new[0] = True
            new[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
            starts = np.flatnonzero(new)
            # reduceat sums each run of duplicates in stored order
            vals = np.add.reduceat(vals, starts)
            rows, cols = rows[starts], cols[starts]
        offsets = np.zeros(nrows + 1, dtype=INDEX)
        np.cumsum(np.bincount(rows, minlength=nrows), out=offsets[1:])
        return cls(nrows, ncols, offsets, cols, vals)

    @classmethod
    def from_dense(cls, a, drop_zeros=True):
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2:
            raise CsrError("dense input must be two-dimensional")
        if drop_zeros:
            r, c = np.nonzero(a)
        else:
            r, c = np.indices(a.shape).reshape(2, -1)
        return cls.from_coo(a.shape[0], a.shape[1], r, c, a[r, c])

    @classmethod
    def identity(cls, n):
        idx = np.arange(n, dtype=INDEX)
        return cls(n, n, np.arange(n + 1, dtype=INDEX), idx, np.ones(n))

    @classmethod
    def diag(cls, d):
        d = np.asarray(d, dtype=np.float64)
        n = d.size
        return cls(n, n, np.arange(n + 1, dtype=INDEX), np.arange(n, dtype=INDEX), d)

    @classmethod
    def zeros(cls, nrows, ncols):
        return cls(nrows, ncols, np.zeros(nrows + 1, dtype=INDEX),
                   np.zeros(0, dtype=INDEX), np.zeros(0))

    # views ----------------------------------------------------------------

    @property
    def shape(self):
        return (self.nrows, self.ncols)

    @property
    def nnz(self) -> int:
        return int(self.row_offsets[-1])

    def row_indices(self):
        """Row index of every stored entry (COO rows)."""
        return np.repeat(np.arange(self.nrows, dtype=INDEX), np.diff(self.row_offsets))

    def to_dense(self):
        out = np.zeros(self.shape)
        out[self.row_indices(), self.col_indices] = self.values
        return out

    def diagonal(self):
        n = min(self.nrows, self.ncols)
        out = np.zeros(n)
        rows = self.row_indices()
        on = rows == self.col_indices
        out[rows[on]] = self.values[on]
        return out

    def with_values(self, values):
        """Same pattern, new values."""
        values = np.asarray(values, dtype=np.float64)
        if values.shape != self.values.shape:
            raise CsrError("value array does not match the pattern")
        return CsrMatrix(self.nrows, self.ncols, self.row_offsets, self.col_indices,
                         values, check=False)

    def scaled(self, a):
        return self.with_values(a * self.values)

    def __matmul__(self, x):
        return spmv(self, x)

    def __repr__(self):
        return f"CsrMatrix({self.nrows}x{self.ncols}, nnz={self.nnz})"

    def max_abs(self) -> float:
        return float(np.abs(self.values).max()) if self.nnz else 0.0

    def structurally_equal(self, other) -> bool:
        return (self.shape == other.shape
                and np.array_equal(self.row_offsets, other.row_offsets)
                and np.array_equal(self.col_indices, other.col_indices))


def check_csr(a: CsrMatrix):
    """Validate the CSR invariants, raising :class:`CsrError` on violation."""
    ro, ci = a.row_offsets, a.col_indices
    if a.nrows < 0 or a.ncols < 0:
        raise CsrError("negative dimension")
    if ro.shape != (a.nrows + 1,):
        raise CsrError("row_offsets must have length nrows + 1")
    if ro[0] != 0:
        raise CsrError("row_offsets[0] must be 0")
    if np.any(np.diff(ro) < 0):
        raise CsrError("row_offsets must be monotone")
    nnz = int(ro[-1])
    if ci.shape != (nnz,) or a.values.shape != (nnz,):
        raise CsrError("index/value arrays disagree with row_offsets[-1]")
    if nnz:
        if ci.min() < 0 or ci.max() >= a.ncols:
            raise CsrError("column index out of range")
        step = np.diff(ci)
        # a new row may restart the column sequence
        row_start = np.zeros(nnz, dtype=bool)
        row_start[ro[:-1][ro[:-1] < nnz]] = True
        if np.any((step <= 0) & ~row_start[1:]):
            raise CsrError("column indices must be strictly increasing within a row")


def unsigned_view(a):
    """Zero-copy ``uint64`` view of an index array.

    Compiled gather loops indexed by unsigned integers skip the negative-index
    wraparound test, which roughly halves the cost of a sparse mat-vec.
    """
    return a.view(np.uint64)


@nb.njit(cache=True, inline="always")
def row_dot(ci, val, x, k0, k1):
    """``sum(val[k] * x[ci[k]] for k in [k0, k1))`` for unsigned ``k0, k1``.

    Four interleaved partial sums break the dependency chain of a single
    accumulator, which otherwise bounds short gathers by the add latency.
    """
    a0 = 0.0
    a1 = 0.0
    a2 = 0.0
    a3 = 0.0
    one = np.uint64(1)
    k = k0
    while k + np.uint64(4) <= k1:
        a0 += val[k] * x[ci[k]]
        a1 += val[k + one] * x[ci[k + one]]
        a2 += val[k + np.uint64(2)] * x[ci[k + np.uint64(2)]]
        a3 += val[k + np.uint64(3)] * x[ci[k + np.uint64(3)]]
        k += np.uint64(4)
    while k < k1:
        a0 += val[k] * x[ci[k]]
        k += one
    return (a0 + a1) + (a2 + a3)


@nb.njit(cache=True)
def _spmv_kernel(ro, ci, val, x, y):
    for i in range(ro.size - 1):
        y[i] = row_dot(ci, val, x, ro[i], ro[i + 1])


def spmv(a: CsrMatrix, x) -> np.ndarray:
    """``y = A x``; each row is summed in four interleaved partial sums."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size != a.ncols:
        raise ValueError(f"dimension mismatch: matrix has {a.ncols} columns, vector {x.size}")
    y = np.empty(a.nrows)
    _spmv_kernel(unsigned_view(a.row_offsets), unsigned_view(a.col_indices), a.values, x, y)
    return y


def transpose(a: CsrMatrix) -> CsrMatrix:
    rows = a.row_indices()
    # stable sort on column keeps rows ascending inside each new row
    order = np.argsort(a.col_indices, kind="stable")
    offsets = np.zeros(a.ncols + 1, dtype=INDEX)
    np.cumsum(np.bincount(a.col_indices, minlength=a.ncols), out=offsets[1:])
    return CsrMatrix(a.ncols, a.nrows, offsets, rows[order], a.values[order], check=False)


def _as_range(r, n, what):
    if isinstance(r, slice):
        start, stop, step = r.indices(n)
        if step != 1:
            raise ValueError(f"{what} range must be contiguous")
        if r.start is not None and not 0 <= r.start <= n:
            raise IndexError(f"{what} range out of bounds")
        if r.stop is not None and not 0 <= r.stop <= n:
            raise IndexError(f"{what} range out of bounds")
        return start, max(start, stop)
    start, stop = r
    if not (0 <= start <= stop <= n):
        raise IndexError(f"{what} range [{start}, {stop}) out of bounds for size {n}")
    return int(start), int(stop)


def extract_block(a: CsrMatrix, rows, cols) -> CsrMatrix:
    """Submatrix ``A[r0:r1, c0:c1]`` reindexed from zero.

    ``rows`` and ``cols`` are ``(start, stop)`` pairs or unit-step slices.
    """
    r0, r1 = _as_range(rows, a.nrows, "row")
    c0, c1 = _as_range(cols, a.ncols, "column")
    lo, hi = a.row_offsets[r0], a.row_offsets[r1]
    ci = a.col_indices[lo:hi]
    keep = (ci >= c0) & (ci < c1)
    row_of = np.repeat(np.arange(r1 - r0, dtype=INDEX), np.diff(a.row_offsets[r0:r1 + 1]))
    offsets = np.zeros(r1 - r0 + 1, dtype=INDEX)
    np.cumsum(np.bincount(row_of[keep], minlength=r1 - r0), out=offsets[1:])
    return CsrMatrix(r1 - r0, c1 - c0, offsets, ci[keep] - c0, a.values[lo:hi][keep], check=False)


def add(a: CsrMatrix, b: CsrMatrix, alpha=1.0, beta=1.0) -> CsrMatrix:
    """``alpha*A + beta*B`` on the union pattern."""
    if a.shape != b.shape:
        raise ValueError("shape mismatch")
    rows = np.concatenate([a.row_indices(), b.row_indices()])
    cols = np.concatenate([a.col_indices, b.col_indices])
    vals = np.concatenate([alpha * a.values, beta * b.values])
    return CsrMatrix.from_coo(a.nrows, a.ncols, rows, cols, vals)


def block(blocks) -> CsrMatrix:
    """Assemble a CSR matrix from a nested list of blocks (``None`` = zero)."""
    heights = [next(b.nrows for b in row if b is not None) for row in blocks]
    widths = [next(blocks[i][j].ncols for i in range(len(blocks)) if blocks[i][j] is not None)
              for j in range(len(blocks[0]))]
    roff = np.concatenate([[0], np.cumsum(heights)])
    coff = np.concatenate([[0], np.cumsum(widths)])
    rs, cs, vs = [], [], []
    for i, row in enumerate(blocks):
        for j, b in enumerate(row):
            if b is None:
                continue
            if b.shape != (heights[i], widths[j]):
                raise ValueError(f"block ({i}, {j}) has inconsistent shape {b.shape}")
            rs.append(b.row_indices() + roff[i])
            cs.append(b.col_indices + coff[j])
            vs.append(b.values)
    return CsrMatrix.from_coo(roff[-1], coff[-1], np.concatenate(rs), np.concatenate(cs),
                              np.concatenate(vs))
