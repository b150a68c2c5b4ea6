"""Per-time-step Oseen saddle-point systems.

The momentum block is ``A = alpha M + K(nu) + N(w) + gamma G``; the free-slip
condition ``u_y = 0`` on both walls is imposed strongly by clearing the
corresponding rows and columns of ``A`` and columns of ``B``, keeping the
diagonal of ``alpha M + K + gamma G`` on the constrained rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..krylov import LinearOperator
from ..linalg import BlockIndexMap, CsrMatrix, block, spmv, transpose
from . import assembly as asm
from .mesh import TaylorHoodSpace

__all__ = ["BlockSaddleSystem", "OseenCoefficients", "assemble_oseen", "build_oseen_system"]


@dataclass(frozen=True)
class OseenCoefficients:
    alpha: float
    nu: float
    gamma: float
    wind: np.ndarray | None = None

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if self.nu <= 0:
            raise ValueError("nu must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")


@dataclass(eq=False)
class BlockSaddleSystem:
    """``[[A, B^T], [B, -C]] [u; p] = [rhs_u; rhs_p]``."""

    A: CsrMatrix
    B: CsrMatrix
    rhs_u: np.ndarray
    rhs_p: np.ndarray
    coefficients: OseenCoefficients
    index: BlockIndexMap
    C: CsrMatrix | None = None
    parts: dict = field(default_factory=dict)
    constrained_dofs: np.ndarray | None = None

    def __post_init__(self):
        n_u, n_p = self.index.n_u, self.index.n_p
        if self.A.shape != (n_u, n_u) or self.B.shape != (n_p, n_u):
            raise ValueError("block shapes disagree with the index map")
        if self.rhs_u.shape != (n_u,) or self.rhs_p.shape != (n_p,):
            raise ValueError("rhs lengths disagree with the index map")
        if self.C is not None and self.C.shape != (n_p, n_p):
            raise ValueError("C must be n_p x n_p")
        self._BT = None

    @property
    def BT(self) -> CsrMatrix:
        if self._BT is None:
            self._BT = transpose(self.B)
        return self._BT

    @property
    def n(self) -> int:
        return self.index.n

    @property
    def rhs(self):
        return np.concatenate([self.rhs_u, self.rhs_p])

    def matvec(self, x):
        x = np.asarray(x, dtype=np.float64)
        u, p = self.index.split(x)
        out = np.empty(self.n)
        out[self.index.u] = spmv(self.A, u) + spmv(self.BT, p)
        bp = spmv(self.B, u)
        if self.C is not None:
            bp -= spmv(self.C, p)
        out[self.index.p] = bp
        return out

    def operator(self) -> LinearOperator:
        return LinearOperator(self.n, self.matvec)

    def full_matrix(self) -> CsrMatrix:
        lower_right = self.C.scaled(-1.0) if self.C is not None else None
        if lower_right is None:
            lower_right = CsrMatrix.zeros(self.index.n_p, self.index.n_p)
        return block([[self.A, self.BT], [self.B, lower_right]])


def _constraint_masks(space):
    if "bc_masks" not in space._cache:
        pat = asm.velocity_pattern(space)
        flag = np.zeros(space.n_u, dtype=bool)
        flag[space.constrained_dofs] = True
        rows = pat.row_indices()
        cols = pat.col_indices
        clear = (flag[rows] | flag[cols]) & (rows != cols)
        diag = flag[rows] & (rows == cols)
        bpat = asm._scatter(space, "pv").pattern
        bclear = flag[bpat.col_indices]
        space._cache["bc_masks"] = (clear, diag, bclear)
    return space._cache["bc_masks"]


def assemble_oseen(space: TaylorHoodSpace, coeffs: OseenCoefficients, rhs_u=None,
                   rhs_p=None) -> BlockSaddleSystem:
    """Assemble the saddle-point system for given coefficients and right-hand side."""
    alpha, nu, gamma = coeffs.alpha, coeffs.nu, coeffs.gamma
    M = asm.assemble_mass(space)
    K = asm.assemble_viscous(space, nu)
    G = asm.assemble_graddiv(space, gamma)
    if coeffs.wind is None:
        N = asm.velocity_pattern(space)
    else:
        N = asm.assemble_convection(space, coeffs.wind)
    symmetric = alpha * M.values + K.values + G.values
    vals = symmetric + N.values
    clear, diag, bclear = _constraint_masks(space)
    vals[clear] = 0.0
    vals[diag] = symmetric[diag]
    A = M.with_values(vals)

    B0 = asm.assemble_div(space)
    bvals = B0.values.copy()
    bvals[bclear] = 0.0
    B = B0.with_values(bvals)

    rhs_u = np.zeros(space.n_u) if rhs_u is None else np.array(rhs_u, dtype=np.float64)
    rhs_u[space.constrained_dofs] = 0.0
    rhs_p = np.zeros(space.n_p) if rhs_p is None else np.asarray(rhs_p, dtype=np.float64)
    return BlockSaddleSystem(
        A=A, B=B, rhs_u=rhs_u, rhs_p=rhs_p, coefficients=coeffs, index=space.index,
        parts={"mass": M, "viscous": K, "convection": N, "graddiv": G},
        constrained_dofs=space.constrained_dofs,
    )


def build_oseen_system(space, nu, gamma, u_prev, u_prev2, dt, forcing=None, t=None):
    """One semi-implicit step.

    With two history states this is BDF2 with extrapolated wind
    ``w = 2 u_prev - u_prev2`` and ``alpha = 3/(2 dt)``; with ``u_prev2=None``
    it is the backward Euler start-up step with ``w = u_prev``.
    ``forcing(x, y, t) -> (fx, fy)`` is evaluated at ``t`` when given.
    """
    if dt <= 0:
        raise ValueError("time step must be positive")
    u_prev = np.asarray(u_prev, dtype=np.float64)
    if u_prev.shape != (space.n_u,):
        raise ValueError(f"u_prev must have length {space.n_u}")
    M = asm.assemble_mass(space)
    if u_prev2 is None:
        alpha = 1.0 / dt
        wind = u_prev.copy()
        hist = u_prev / dt
    else:
        u_prev2 = np.asarray(u_prev2, dtype=np.float64)
        if u_prev2.shape != u_prev.shape:
            raise ValueError("u_prev and u_prev2 differ in length")
        alpha = 1.5 / dt
        wind = 2.0 * u_prev - u_prev2
        hist = (4.0 * u_prev - u_prev2) / (2.0 * dt)
    rhs_u = spmv(M, hist)
    if forcing is not None:
        rhs_u += asm.assemble_load(space, forcing, t) if t is not None else asm.assemble_load(space, forcing)
    coeffs = OseenCoefficients(alpha=alpha, nu=nu, gamma=gamma, wind=wind)
    return assemble_oseen(space, coeffs, rhs_u=rhs_u)
