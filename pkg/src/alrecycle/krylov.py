"""Flexible GMRES (right preconditioned) and preconditioned CG."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numba as nb
import numpy as np

from .linalg import CsrMatrix, spmv, unsigned_view

__all__ = [
    "BreakdownError",
    "IndefiniteError",
    "LinearOperator",
    "SolveReport",
    "fgmres",
    "pcg",
    "pcg_jacobi",
]

log = logging.getLogger(__name__)

BREAKDOWN = 1e-300


class BreakdownError(ArithmeticError):
    pass


class IndefiniteError(ArithmeticError):
    pass


@dataclass(frozen=True)
class LinearOperator:
    """Square operator given by its action on a vector."""

    n: int
    apply: Callable[[np.ndarray], np.ndarray]

    def __call__(self, x):
        return self.apply(x)

    @classmethod
    def from_matrix(cls, a):
        if isinstance(a, CsrMatrix):
            if a.nrows != a.ncols:
                raise ValueError("operator must be square")
            return cls(a.nrows, lambda x: spmv(a, x))
        a = np.asarray(a, dtype=np.float64)
        return cls(a.shape[0], lambda x: a @ x)

    @classmethod
    def identity(cls, n):
        return cls(n, lambda x: np.array(x, dtype=np.float64, copy=True))


def as_operator(op, n=None):
    if op is None:
        if n is None:
            raise ValueError("identity operator needs a dimension")
        return LinearOperator.identity(n)
    if isinstance(op, LinearOperator):
        return op
    return LinearOperator.from_matrix(op)


@dataclass
class SolveReport:
    iterations: int
    residual_history: list = field(default_factory=list)
    converged: bool = False
    final_relative_residual: float = math.nan
    true_residual_mismatch: bool = False

    def __post_init__(self):
        if self.residual_history and self.iterations != len(self.residual_history) - 1:
            raise ValueError("iterations must equal len(residual_history) - 1")


def _check_dims(op, b, x0):
    b = np.asarray(b, dtype=np.float64)
    if b.ndim != 1 or b.size != op.n:
        raise ValueError(f"rhs has length {b.size}, operator dimension is {op.n}")
    if x0 is None:
        x0 = np.zeros(op.n)
    else:
        x0 = np.array(x0, dtype=np.float64)
        if x0.shape != b.shape:
            raise ValueError("initial guess and rhs differ in length")
    return b, x0


@nb.njit(cache=True)
def _mgs_sweep(V, j, w, h):
    """Orthogonalize ``w`` against rows ``0..j`` of ``V``, adding coefficients to ``h``."""
    n = w.size
    for i in range(j + 1):
        c = np.dot(V[i], w)  # BLAS; a plain loop reduction does not vectorize
        h[i] += c
        for k in range(n):
            w[k] -= c * V[i, k]


def fgmres(op, precond, b, x0=None, rel_tol=1e-8, max_iter=200, reference="initial"):
    """Solve ``op x = b`` by flexible GMRES with right preconditioning.

    The preconditioner may change from one application to the next (inner
    iterative solves). Convergence is declared once the Arnoldi least-squares
    residual falls below ``rel_tol`` times the reference norm: the initial
    residual ``||b - op x0||`` (``reference="initial"``) or ``||b||``
    (``reference="rhs"``). The true residual of the returned iterate is
    recomputed once; a disagreement by more than ten times the tolerance
    sets ``true_residual_mismatch`` on the report.

    Returns ``(x, report)``. Hitting ``max_iter`` returns the last iterate
    with ``converged=False``.
    """
    op = as_operator(op)
    precond = as_operator(precond, op.n)
    if rel_tol <= 0:
        raise ValueError("rel_tol must be positive")
    if reference not in ("initial", "rhs"):
        raise ValueError(f"unknown reference {reference!r}")
    b, x = _check_dims(op, b, x0)

    r = b - op(x)
    beta = float(np.linalg.norm(r))
    ref = beta if reference == "initial" else float(np.linalg.norm(b))
    if ref == 0.0:
        ref = beta
    history = [beta / ref if ref > 0 else 0.0]
    if beta <= rel_tol * ref or beta == 0.0:
        rep = SolveReport(0, history, True, history[0])
        return x, rep

    n = op.n
    m = max_iter
    V = np.empty((m + 1, n))
    Z = np.empty((m, n))
    H = np.zeros((m + 1, m))
    cs = np.zeros(m)
    sn = np.zeros(m)
    g = np.zeros(m + 1)
    g[0] = beta
    V[0] = r / beta
    converged = False
    j = 0
    for j in range(m):
        Z[j] = precond(V[j])
        w = np.array(op(Z[j]), dtype=np.float64)
        norm_before = np.linalg.norm(w)
        h = np.zeros(j + 1)
        _mgs_sweep(V, j, w, h)
        norm_after = np.linalg.norm(w)
        if norm_after < 0.7 * norm_before:
            # one extra Gram-Schmidt sweep restores orthogonality
            _mgs_sweep(V, j, w, h)
            norm_after = np.linalg.norm(w)
        H[: j + 1, j] = h
        H[j + 1, j] = norm_after

        for i in range(j):
            t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
            H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
            H[i, j] = t
        denom = math.hypot(H[j, j], H[j + 1, j])
        if denom == 0.0:
            raise BreakdownError(f"singular Hessenberg column at iteration {j + 1}")
        cs[j] = H[j, j] / denom
        sn[j] = H[j + 1, j] / denom
        H[j, j] = denom
        H[j + 1, j] = 0.0
        g[j + 1] = -sn[j] * g[j]
        g[j] = cs[j] * g[j]
        res = abs(g[j + 1])
        history.append(res / ref)
        if res <= rel_tol * ref:
            converged = True
            break
        if norm_after < BREAKDOWN:
            raise BreakdownError(
                f"Arnoldi breakdown at iteration {j + 1} without convergence")
        V[j + 1] = w / norm_after

    k = j + 1
    y = np.zeros(k)
    for i in range(k - 1, -1, -1):
        y[i] = (g[i] - H[i, i + 1:k] @ y[i + 1:]) / H[i, i]
    x = x + y @ Z[:k]

    true_res = float(np.linalg.norm(b - op(x))) / ref
    report = SolveReport(k, history, converged, true_res)
    if true_res > 10 * max(rel_tol, history[-1]):
        report.true_residual_mismatch = True
        log.warning("FGMRES true residual %.3e exceeds recurrence residual %.3e",
                    true_res, history[-1])
    return x, report


def pcg(op, precond, b, x0=None, rel_tol=1e-8, max_iter=200):
    """Preconditioned conjugate gradients for symmetric (semi)definite ``op``.

    Stops when ``||b - op x||_2 <= rel_tol * ||b - op x0||_2``. A
    nonpositive curvature ``p^T op p <= 0`` raises :class:`IndefiniteError`.
    """
    op = as_operator(op)
    precond = as_operator(precond, op.n)
    if rel_tol <= 0:
        raise ValueError("rel_tol must be positive")
    b, x = _check_dims(op, b, x0)
    r = b - op(x)
    r0 = float(np.linalg.norm(r))
    history = [1.0 if r0 > 0 else 0.0]
    if r0 == 0.0:
        return x, SolveReport(0, history, True, 0.0)
    z = precond(r)
    p = z.copy()
    rz = float(r @ z)
    converged = False
    for _ in range(max_iter):
        q = op(p)
        curv = float(p @ q)
        if curv <= 0.0:
            raise IndefiniteError(f"nonpositive curvature {curv:.3e} in CG")
        a = rz / curv
        x += a * p
        r -= a * q
        rel = float(np.linalg.norm(r)) / r0
        history.append(rel)
        if rel <= rel_tol:
            converged = True
            break
        z = precond(r)
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, SolveReport(len(history) - 1, history, converged, history[-1])


@nb.njit(cache=True)
def _pcg_jacobi_kernel(ro, ci, val, dinv, b, x, rel_tol, max_iter, hist):
    n = b.size
    r = np.empty(n)
    q = np.empty(n)
    for i in range(n):
        s = 0.0
        for k in range(ro[i], ro[i + 1]):
            s += val[k] * x[ci[k]]
        r[i] = b[i] - s
    r0 = np.sqrt(np.dot(r, r))
    if r0 == 0.0:
        return 0, 2
    z = dinv * r
    p = z.copy()
    rz = np.dot(r, z)
    for it in range(max_iter):
        for i in range(n):
            s = 0.0
            for k in range(ro[i], ro[i + 1]):
                s += val[k] * p[ci[k]]
            q[i] = s
        curv = np.dot(p, q)
        if curv <= 0.0:
            hist[0] = curv
            return it, -1
        a = rz / curv
        x += a * p
        r -= a * q
        rel = np.sqrt(np.dot(r, r)) / r0
        hist[it + 1] = rel
        if rel <= rel_tol:
            return it + 1, 0
        z = dinv * r
        rz_new = np.dot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return max_iter, 1


def pcg_jacobi(a: CsrMatrix, b, x0=None, rel_tol=1e-8, max_iter=200, diagonal=None):
    """Compiled :func:`pcg` for a CSR matrix with diagonal (Jacobi) preconditioning.

    Same stopping rule, report and errors as ``pcg(a, diag(a)^{-1}, ...)``;
    ``diagonal`` overrides the preconditioner diagonal.
    """
    if a.nrows != a.ncols:
        raise ValueError("operator must be square")
    if rel_tol <= 0:
        raise ValueError("rel_tol must be positive")
    b, x = _check_dims(LinearOperator(a.nrows, None), b, x0)
    d = a.diagonal() if diagonal is None else np.asarray(diagonal, dtype=np.float64)
    if d.shape != (a.nrows,) or np.any(d <= 0):
        raise ValueError("Jacobi preconditioner needs a positive diagonal")
    hist = np.full(max_iter + 1, np.nan)
    hist[0] = 1.0
    iters, status = _pcg_jacobi_kernel(unsigned_view(a.row_offsets), unsigned_view(a.col_indices), a.values, 1.0 / d, b, x,
                                       float(rel_tol), int(max_iter), hist)
    if status < 0:
        raise IndefiniteError(f"nonpositive curvature {hist[0]:.3e} in CG")
    if status == 2:
        return x, SolveReport(0, [0.0], True, 0.0)
    history = [float(v) for v in hist[: iters + 1]]
    return x, SolveReport(iters, history, status == 0, history[-1])
