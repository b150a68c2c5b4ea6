"""Matrix Market coordinate I/O for real matrices."""

from __future__ import annotations

import math

import numpy as np

from .linalg import CsrMatrix

__all__ = ["MatrixMarketError", "mm_read", "mm_write"]

HEADER = "%%MatrixMarket matrix coordinate real general"


class MatrixMarketError(ValueError):
    pass


def mm_write(path, a: CsrMatrix, comment=None):
    """Write ``a`` in general coordinate form with 17 significant digits."""
    if not np.all(np.isfinite(a.values)):
        raise MatrixMarketError("refusing to write non-finite values")
    rows = a.row_indices() + 1
    cols = a.col_indices + 1
    with open(path, "w") as fh:
        fh.write(HEADER + "\n")
        if comment:
            for line in str(comment).splitlines():
                fh.write(f"% {line}\n")
        fh.write(f"{a.nrows} {a.ncols} {a.nnz}\n")
        for r, c, v in zip(rows.tolist(), cols.tolist(), a.values.tolist()):
            fh.write(f"{r} {c} {v:.17g}\n")


def mm_read(path) -> CsrMatrix:
    """Read a coordinate real general/symmetric file.

    Symmetric files store one triangle; the mirror entries are restored so
    the result is in general storage.
    """
    with open(path) as fh:
        header = fh.readline()
        tokens = header.strip().split()
        if len(tokens) != 5 or tokens[0] != "%%MatrixMarket":
            raise MatrixMarketError(f"malformed header: {header.strip()!r}")
        obj, fmt, field, sym = (t.lower() for t in tokens[1:])
        if obj != "matrix" or fmt != "coordinate":
            raise MatrixMarketError("only coordinate matrices are supported")
        if field not in ("real", "double", "integer"):
            raise MatrixMarketError(f"unsupported field {field!r}")
        if sym not in ("general", "symmetric"):
            raise MatrixMarketError(f"unsupported symmetry {sym!r}")

        line = fh.readline()
        while line and (line.startswith("%") or not line.strip()):
            line = fh.readline()
        try:
            nrows, ncols, nnz = (int(t) for t in line.split())
        except ValueError:
            raise MatrixMarketError(f"malformed size line: {line.strip()!r}") from None
        if min(nrows, ncols, nnz) < 0:
            raise MatrixMarketError("negative size in size line")

        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz)
        k = 0
        for line in fh:
            s = line.strip()
            if not s or s.startswith("%"):
                continue
            if k >= nnz:
                raise MatrixMarketError(f"more than the declared {nnz} entries")
            parts = s.split()
            if len(parts) != 3:
                raise MatrixMarketError(f"malformed entry line: {s!r}")
            r, c, v = int(parts[0]), int(parts[1]), float(parts[2])
            if not math.isfinite(v):
                raise MatrixMarketError(f"non-finite value on entry {k + 1}")
            if not (1 <= r <= nrows and 1 <= c <= ncols):
                raise MatrixMarketError(f"entry {k + 1} index ({r}, {c}) out of range")
            rows[k], cols[k], vals[k] = r - 1, c - 1, v
            k += 1
        if k != nnz:
            raise MatrixMarketError(f"declared {nnz} entries, found {k}")

    if sym == "symmetric":
        if nrows != ncols:
            raise MatrixMarketError("symmetric matrix must be square")
        off = rows != cols
        rows, cols, vals = (np.concatenate([rows, cols[off]]),
                            np.concatenate([cols, rows[off]]),
                            np.concatenate([vals, vals[off]]))
    return CsrMatrix.from_coo(nrows, ncols, rows, cols, vals)
