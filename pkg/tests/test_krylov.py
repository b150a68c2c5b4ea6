import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from alrecycle.fem import assembly as asm
from alrecycle.krylov import (
    BreakdownError,
    IndefiniteError,
    LinearOperator,
    SolveReport,
    fgmres,
    pcg,
    pcg_jacobi,
)
from alrecycle.linalg import CsrMatrix


def test_fgmres_identity_one_iteration(rng):
    b = rng.standard_normal(7)
    x, rep = fgmres(np.eye(7), None, b)
    assert rep.converged and rep.iterations == 1
    np.testing.assert_allclose(x, b)


def test_fgmres_three_distinct_eigenvalues():
    a = np.diag([1.0, 2.0, 4.0])
    x, rep = fgmres(a, None, np.ones(3), rel_tol=1e-12)
    assert rep.converged and rep.iterations <= 3
    np.testing.assert_allclose(x, [1.0, 0.5, 0.25])


def test_fgmres_zero_rhs_returns_zero():
    x, rep = fgmres(np.eye(3), None, np.zeros(3))
    assert rep.iterations == 0 and rep.converged
    np.testing.assert_array_equal(x, 0.0)


def test_fgmres_history_and_report(rng):
    a = rng.standard_normal((30, 30)) + 8 * np.eye(30)
    b = rng.standard_normal(30)
    x, rep = fgmres(a, None, b, rel_tol=1e-10)
    assert rep.converged
    assert len(rep.residual_history) == rep.iterations + 1
    assert all(h2 <= h1 * (1 + 1e-12) for h1, h2 in zip(rep.residual_history, rep.residual_history[1:]))
    assert np.linalg.norm(b - a @ x) <= 1e-9 * np.linalg.norm(b)
    assert not rep.true_residual_mismatch


def test_fgmres_max_iter_not_converged(rng):
    a = np.diag(np.arange(1.0, 41.0))
    x, rep = fgmres(a, None, np.ones(40), rel_tol=1e-12, max_iter=5)
    assert not rep.converged and rep.iterations == 5


def test_fgmres_reference_rhs_uses_norm_of_b():
    # a good initial guess makes the initial-residual criterion much stricter
    a = np.diag([1.0, 2.0, 3.0, 4.0])
    b = np.ones(4)
    x0 = np.linalg.solve(a, b) + 1e-7
    _, r_rhs = fgmres(a, None, b, x0=x0, rel_tol=1e-6, reference="rhs")
    assert r_rhs.iterations == 0
    _, r_init = fgmres(a, None, b, x0=x0, rel_tol=1e-6, reference="initial")
    assert r_init.iterations >= 1


def test_fgmres_flexible_preconditioner(rng):
    # a preconditioner that changes between applications
    a = rng.standard_normal((25, 25)) + 10 * np.eye(25)
    d = np.diag(a)
    calls = []

    def pre(v):
        calls.append(1)
        return v / d * (1.0 + 0.1 * (len(calls) % 3))

    b = rng.standard_normal(25)
    x, rep = fgmres(a, LinearOperator(25, pre), b, rel_tol=1e-10)
    assert rep.converged
    assert np.linalg.norm(b - a @ x) <= 1e-9 * np.linalg.norm(b)


def test_fgmres_breakdown_raises():
    # singular operator with b outside its range
    a = np.diag([1.0, 0.0])
    with pytest.raises(BreakdownError):
        fgmres(a, None, np.array([0.0, 1.0]))


def test_fgmres_dimension_errors():
    with pytest.raises(ValueError):
        fgmres(np.eye(3), None, np.ones(2))
    with pytest.raises(ValueError):
        fgmres(np.eye(3), None, np.ones(3), reference="other")


def test_fgmres_deterministic(rng):
    a = rng.standard_normal((20, 20)) + 6 * np.eye(20)
    b = rng.standard_normal(20)
    x1, r1 = fgmres(a, None, b)
    x2, r2 = fgmres(a, None, b)
    assert np.array_equal(x1, x2) and r1.residual_history == r2.residual_history


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_property_exact_preconditioner_one_iteration(seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((20, 20)) + 5 * np.eye(20)
    ainv = np.linalg.inv(a)
    x, rep = fgmres(a, ainv, rng.standard_normal(20))
    assert rep.converged and rep.iterations == 1


def test_report_invariant():
    with pytest.raises(ValueError):
        SolveReport(3, [1.0, 0.5])


def test_pcg_identity():
    x, rep = pcg(np.eye(4), None, np.arange(4.0))
    assert rep.iterations == 1
    np.testing.assert_allclose(x, np.arange(4.0))


def test_pcg_exact_scaling():
    a = np.diag([1.0, 100.0])
    _, rep = pcg(a, np.diag([1.0, 0.01]), np.array([1.0, 1.0]))
    assert rep.converged and rep.iterations <= 2


def test_pcg_matches_cholesky_on_pressure_mass(space8, rng):
    mp = asm.assemble_pressure_mass(space8)
    d = mp.to_dense()
    b = rng.standard_normal(mp.nrows)
    x, rep = pcg(LinearOperator.from_matrix(mp), None, b, rel_tol=1e-8)
    c = np.linalg.cholesky(d)
    oracle = np.linalg.solve(c.T, np.linalg.solve(c, b))
    assert rep.converged
    assert np.linalg.norm(x - oracle) <= 1e-7 * np.linalg.norm(oracle)


def test_pcg_error_energy_norm_decreases(rng):
    g = rng.standard_normal((15, 15))
    a = g @ g.T + np.eye(15)
    b = rng.standard_normal(15)
    xs = np.linalg.solve(a, b)
    errs = []
    for k in range(1, 15):
        x, _ = pcg(a, None, b, rel_tol=1e-300, max_iter=k)
        e = x - xs
        errs.append(e @ a @ e)
    assert all(e2 <= e1 * (1 + 1e-10) + 1e-24 for e1, e2 in zip(errs, errs[1:]))


def test_pcg_indefinite_raises():
    with pytest.raises(IndefiniteError):
        pcg(np.diag([1.0, -1.0]), None, np.array([1.0, 1.0]))


def test_pcg_jacobi_matches_reference_pcg(space8, rng):
    lp = asm.assemble_pressure_laplacian(space8)
    a = CsrMatrix(lp.nrows, lp.ncols, lp.row_offsets, lp.col_indices,
                  lp.values + 0.1 * (lp.row_indices() == lp.col_indices), check=False)
    b = rng.standard_normal(a.nrows)
    d = a.diagonal()
    for tol, cap in ((1e-2, 50), (1e-10, 500), (1e-12, 3)):
        x1, r1 = pcg_jacobi(a, b, rel_tol=tol, max_iter=cap)
        x2, r2 = pcg(LinearOperator.from_matrix(a), LinearOperator(a.nrows, lambda r: r / d), b,
                     rel_tol=tol, max_iter=cap)
        assert r1.iterations == r2.iterations and r1.converged == r2.converged
        # 1/d vs division by d: rounding-level differences only
        np.testing.assert_allclose(r1.residual_history, r2.residual_history, rtol=1e-8, atol=1e-15)
        np.testing.assert_allclose(x1, x2, rtol=1e-10, atol=1e-12 * np.abs(x2).max())


def test_pcg_jacobi_zero_rhs_and_errors():
    a = CsrMatrix.from_dense(np.diag([2.0, 3.0]))
    x, rep = pcg_jacobi(a, np.zeros(2))
    assert rep.converged and rep.iterations == 0 and not x.any()
    with pytest.raises(IndefiniteError):
        pcg_jacobi(CsrMatrix.from_dense([[1.0, 2.0], [2.0, 1.0]]), np.array([1.0, -1.0]))
    with pytest.raises(ValueError):
        pcg_jacobi(CsrMatrix.from_dense(np.diag([1.0, -1.0])), np.ones(2))
