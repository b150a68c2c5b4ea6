"""Augmented Lagrangian block preconditioning with recycled LU factors.

Sparse storage, a fill-reducing ordering and a threshold-pivoted sparse LU,
FGMRES and CG, a Taylor-Hood Oseen assembly on a periodic strip, the AL and
modified AL preconditioners, and a controller that reuses velocity-block
factorizations across BDF2 time steps.
"""

from .krylov import BreakdownError, IndefiniteError, LinearOperator, SolveReport, fgmres, pcg
from .linalg import BlockIndexMap, CsrError, CsrMatrix, check_csr, extract_block, spmv, transpose
from .lu import LuFactors, SingularMatrixError, lu_solve, sparse_lu
from .mmio import MatrixMarketError, mm_read, mm_write
from .ordering import amd_order, cholesky_fill, natural_order
from .precond import (
    AlPreconditioner,
    SchurPrecond,
    VelocityPrecond,
    estimate_schur_equivalence,
    factor_velocity,
)
from .recycler import (
    KrylovSettings,
    PreconditionerCache,
    RecyclePolicy,
    RecycleState,
    SolverFailure,
    StepStats,
    SummaryRow,
    decide,
    solve_step,
    summarize,
)

__version__ = "0.1.0"

__all__ = [
    "AlPreconditioner", "BlockIndexMap", "BreakdownError", "CsrError", "CsrMatrix",
    "IndefiniteError", "KrylovSettings", "LinearOperator", "LuFactors", "MatrixMarketError",
    "PreconditionerCache", "RecyclePolicy", "RecycleState", "SchurPrecond",
    "SingularMatrixError", "SolveReport", "SolverFailure", "StepStats", "SummaryRow",
    "VelocityPrecond", "amd_order", "check_csr", "cholesky_fill", "decide",
    "estimate_schur_equivalence", "extract_block", "factor_velocity", "fgmres",
    "lu_solve", "mm_read", "mm_write", "natural_order", "pcg", "solve_step",
    "sparse_lu", "spmv", "summarize", "transpose",
]
