"""Block-triangular augmented Lagrangian preconditioner.

``P = [[A_hat, B^T], [0, S_hat]]`` applied on the right. ``A_hat^{-1}`` is an
LU solve with (possibly stale) factors of the whole velocity block, or, in the
modified variant, a block back substitution with per-component factors of the
diagonal blocks. ``S_hat^{-1}`` is the sum of a scaled pressure-mass solve and
a scaled pressure-Laplacian solve, both by inner CG.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .krylov import LinearOperator, pcg, pcg_jacobi
from .linalg import BlockIndexMap, CsrMatrix, add, extract_block, spmv, transpose
from .lu import LuFactors, lu_solve, sparse_lu
from .ordering import amd_order

__all__ = [
    "AlPreconditioner",
    "InnerSolveError",
    "SchurPrecond",
    "VelocityPrecond",
    "apply_precond",
    "apply_schur_inv",
    "apply_velocity_inv",
    "estimate_schur_equivalence",
    "factor_velocity",
]


class InnerSolveError(ArithmeticError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class SchurPrecond:
    """``S_hat^{-1} = ((nu+gamma)^{-1} M_p + C)^{-1} + (alpha^{-1} L_p + C)^{-1}``.

    Without ``C`` the pressure space carries a constant null mode. Inputs are
    then made orthogonal to constants and outputs are shifted to zero
    ``M_p``-weighted mean. ``use_alpha_term=False`` drops the second term
    (steady problems).

    ``inner_precond`` selects the preconditioner of both inner CG solves:
    ``"factor"`` (sparse LU of the inner operator, the Neumann Laplacian term
    shifted by a tiny multiple of ``M_p``) or ``"jacobi"`` (its diagonal).
    """

    def __init__(self, Mp: CsrMatrix, Lp: CsrMatrix, nu, gamma, alpha, C=None,
                 inner_tol=1e-2, inner_max_iter=50, use_alpha_term=True,
                 inner_precond="factor"):
        if nu + gamma <= 0:
            raise ValueError("nu + gamma must be positive")
        if use_alpha_term and alpha <= 0:
            raise ValueError("alpha must be positive when the alpha term is used")
        self.Mp, self.Lp, self.C = Mp, Lp, C
        self.nu, self.gamma, self.alpha = float(nu), float(gamma), float(alpha)
        self.inner_tol = inner_tol
        self.inner_max_iter = inner_max_iter
        self.use_alpha_term = use_alpha_term
        if inner_precond not in ("factor", "jacobi"):
            raise ValueError(f"unknown inner preconditioner {inner_precond!r}")
        self.inner_precond = inner_precond
        self.n = Mp.nrows
        self.project = C is None
        self.inner_reports = []

        self._K1 = self._shifted(Mp, 1.0 / (self.nu + self.gamma))
        self._F1 = self._F2 = None
        if use_alpha_term:
            self._K2 = self._shifted(Lp, 1.0 / self.alpha)
        if inner_precond == "factor":
            self._F1 = sparse_lu(self._K1)
            if use_alpha_term:
                # keeps the factorization regular; negligible on mean-zero data
                eps = 1e-8 * np.abs(self._K2.values).max() / np.abs(Mp.values).max()
                self._F2 = sparse_lu(add(self._K2, Mp, 1.0, eps))
        self._mp1 = spmv(Mp, np.ones(self.n))
        self._area = float(self._mp1.sum())

    def _shifted(self, X, s):
        """``s X + C`` as one CSR matrix."""
        if self.C is None:
            return CsrMatrix(X.nrows, X.ncols, X.row_offsets, X.col_indices, s * X.values,
                             check=False)
        return add(X, self.C, s, 1.0)

    def with_alpha(self, alpha):
        """Same operator with a new reaction coefficient."""
        return SchurPrecond(self.Mp, self.Lp, self.nu, self.gamma, alpha, C=self.C,
                            inner_tol=self.inner_tol, inner_max_iter=self.inner_max_iter,
                            use_alpha_term=self.use_alpha_term,
                            inner_precond=self.inner_precond)

    def project_in(self, r):
        return r - r.mean() if self.project else r

    def project_out(self, y):
        return y - (self._mp1 @ y) / self._area if self.project else y

    def _inner(self, K, F, r, label):
        try:
            if F is None:
                y, rep = pcg_jacobi(K, r, rel_tol=self.inner_tol, max_iter=self.inner_max_iter)
            else:
                y, rep = pcg(LinearOperator.from_matrix(K), LinearOperator(self.n, F.solve), r,
                             rel_tol=self.inner_tol, max_iter=self.inner_max_iter)
        except ArithmeticError as exc:
            raise InnerSolveError(f"inner CG ({label}) failed: {exc}") from exc
        if not np.all(np.isfinite(y)):
            raise InnerSolveError(f"inner CG ({label}) produced non-finite values", rep)
        self.inner_reports.append(rep)
        return y

    def apply(self, r_p):
        r_p = np.asarray(r_p, dtype=np.float64)
        if r_p.shape != (self.n,):
            raise ValueError(f"pressure residual must have length {self.n}")
        r = self.project_in(r_p)
        y = self._inner(self._K1, self._F1, r, "mass")
        if self.use_alpha_term:
            y = y + self._inner(self._K2, self._F2, r, "laplacian")
        return self.project_out(y)

    __call__ = apply

    def dense_inverse(self):
        """Dense matrix of this operator with exact inner solves."""
        Mp = self.Mp.to_dense()
        n = self.n
        s1 = 1.0 / (self.nu + self.gamma)
        C = self.C.to_dense() if self.C is not None else np.zeros((n, n))
        Pin = np.eye(n) - np.ones((n, n)) / n if self.project else np.eye(n)
        out = np.linalg.solve(s1 * Mp + C, Pin)
        if self.use_alpha_term:
            X = self.Lp.to_dense() / self.alpha + C
            out = out + (np.linalg.pinv(X, hermitian=True) if self.project else np.linalg.inv(X)) @ Pin
        if self.project:
            out = out - np.outer(np.ones(n), self._mp1 @ out) / self._area
        return out


def apply_schur_inv(S: SchurPrecond, r_p):
    return S.apply(r_p)


@dataclass(frozen=True)
class VelocityPrecond:
    """Full (one LU of ``A``) or modified (LUs of diagonal component blocks)."""

    variant: str
    factors: tuple                 # LuFactors, one per diagonal block
    ranges: tuple                  # (start, stop) per block
    upper: tuple = ()              # ((i, j, A_ij), ...) strictly upper blocks

    def __post_init__(self):
        if self.variant not in ("full", "modified"):
            raise ValueError(f"unknown velocity variant {self.variant!r}")

    @property
    def n(self) -> int:
        return self.ranges[-1][1]

    @property
    def fill_nnz(self) -> int:
        return sum(f.fill_nnz for f in self.factors)

    def apply(self, r_u):
        r_u = np.asarray(r_u, dtype=np.float64)
        if r_u.shape != (self.n,):
            raise ValueError(f"velocity residual must have length {self.n}")
        if self.variant == "full":
            return lu_solve(self.factors[0], r_u)
        z = np.empty_like(r_u)
        for i in range(len(self.factors) - 1, -1, -1):
            a, b = self.ranges[i]
            rhs = r_u[a:b].copy()
            for (bi, bj, Aij) in self.upper:
                if bi == i:
                    c, d = self.ranges[bj]
                    rhs -= spmv(Aij, z[c:d])
            z[a:b] = lu_solve(self.factors[i], rhs)
        return z

    __call__ = apply


def component_ranges(index: BlockIndexMap):
    return ((0, index.n_ux), (index.n_ux, index.n_u))


def factor_velocity(A: CsrMatrix, variant="full", index: BlockIndexMap | None = None,
                    orderings=None, pivot_tol=0.1) -> VelocityPrecond:
    """Factor the velocity block for the chosen variant.

    ``orderings`` (a dict) caches fill-reducing orderings between calls; the
    pattern of ``A`` does not change across time steps.
    """
    if orderings is None:
        orderings = {}
    if variant == "full":
        if "full" not in orderings:
            orderings["full"] = amd_order(A)
        F = sparse_lu(A, ordering=orderings["full"], pivot_tol=pivot_tol)
        return VelocityPrecond("full", (F,), ((0, A.nrows),))
    if variant != "modified":
        raise ValueError(f"unknown velocity variant {variant!r}")
    if index is None:
        raise ValueError("the modified variant needs the block index map")
    ranges = component_ranges(index)
    factors, upper = [], []
    for i, (a, b) in enumerate(ranges):
        Aii = extract_block(A, (a, b), (a, b))
        key = ("modified", i)
        if key not in orderings:
            orderings[key] = amd_order(Aii)
        factors.append(sparse_lu(Aii, ordering=orderings[key], pivot_tol=pivot_tol))
        for j in range(i + 1, len(ranges)):
            c, d = ranges[j]
            upper.append((i, j, extract_block(A, (a, b), (c, d))))
    return VelocityPrecond("modified", tuple(factors), ranges, tuple(upper))


def apply_velocity_inv(V: VelocityPrecond, r_u):
    return V.apply(r_u)


class AlPreconditioner:
    """Right preconditioner ``[[A_hat, B^T], [0, S_hat]]`` as an operator."""

    def __init__(self, velocity: VelocityPrecond, schur: SchurPrecond, B: CsrMatrix,
                 index: BlockIndexMap, BT: CsrMatrix | None = None):
        if velocity.n != index.n_u or schur.n != index.n_p or B.shape != (index.n_p, index.n_u):
            raise ValueError("preconditioner parts disagree with the index map")
        self.velocity = velocity
        self.schur = schur
        self.B = B
        self.BT = BT if BT is not None else transpose(B)
        self.index = index

    @property
    def n(self) -> int:
        return self.index.n

    def apply(self, r):
        r = np.asarray(r, dtype=np.float64)
        if r.shape != (self.n,):
            raise ValueError(f"residual must have length {self.n}")
        r_u, r_p = self.index.split(r)
        z_p = self.schur.apply(r_p)
        z_u = self.velocity.apply(r_u - spmv(self.BT, z_p))
        return np.concatenate([z_u, z_p])

    __call__ = apply

    def operator(self) -> LinearOperator:
        return LinearOperator(self.n, self.apply)


def apply_precond(P: AlPreconditioner, r):
    return P.apply(r)


def schur_preconditioner_for(system, space=None, Mp=None, Lp=None, **kwargs) -> SchurPrecond:
    """Schur part matched to a system's coefficients."""
    from .fem import assembly as asm

    if Mp is None:
        Mp = asm.assemble_pressure_mass(space)
    if Lp is None:
        Lp = asm.assemble_pressure_laplacian(space)
    c = system.coefficients
    use_alpha = kwargs.pop("use_alpha_term", c.alpha > 0)
    return SchurPrecond(Mp, Lp, c.nu, c.gamma, c.alpha if use_alpha else 0.0, C=system.C,
                        use_alpha_term=use_alpha, **kwargs)


def estimate_schur_equivalence(system, S_hat: SchurPrecond, return_eigenvalues=False):
    """Extreme eigenvalue moduli of ``S_hat^{-1} S`` on the mean-zero subspace.

    ``S = B A^{-1} B^T + C`` is formed densely (a rank-revealing least-squares
    solve handles a singular ``A`` such as the pure viscous block).
    ``S_hat`` may be any object with a ``dense_inverse()`` method.
    """
    n_u, n_p = system.index.n_u, system.index.n_p
    if n_u + n_p > 3000:
        raise ValueError(f"system too large for dense work: {n_u + n_p} > 3000")
    A = system.A.to_dense()
    B = system.B.to_dense()
    X, *_ = sla.lstsq(A, B.T, lapack_driver="gelsy", cond=1e-12)
    S = B @ X
    if system.C is not None:
        S = S + system.C.to_dense()
    Sinv = S_hat.dense_inverse()
    T = Sinv @ S
    if getattr(S_hat, "project", False):
        # orthonormal basis of {p : 1^T M_p p = 0}
        m1 = S_hat._mp1 / np.linalg.norm(S_hat._mp1)
        Q, _ = np.linalg.qr(np.column_stack([m1, np.eye(n_p)[:, : n_p - 1]]))
        Z = Q[:, 1:]
        T = Z.T @ T @ Z
    lam = np.linalg.eigvals(T)
    mod = np.abs(lam)
    out = (float(mod.min()), float(mod.max()))
    if return_eigenvalues:
        return out, lam
    return out
