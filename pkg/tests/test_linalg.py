import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from alrecycle.linalg import (
    BlockIndexMap,
    CsrError,
    CsrMatrix,
    add,
    block,
    check_csr,
    extract_block,
    spmv,
    transpose,
)
from alrecycle.mmio import MatrixMarketError, mm_read, mm_write
from conftest import random_sparse


def test_spmv_diagonal():
    a = CsrMatrix.diag([2.0, 3.0])
    np.testing.assert_array_equal(spmv(a, np.ones(2)), [2.0, 3.0])


def test_spmv_zero_matrix():
    a = CsrMatrix.zeros(2, 2)
    np.testing.assert_array_equal(spmv(a, np.array([5.0, -7.0])), [0.0, 0.0])


def test_spmv_matches_dense(rng):
    d = random_sparse(rng, 5, 5, 0.4)
    x = rng.standard_normal(5)
    np.testing.assert_allclose(spmv(CsrMatrix.from_dense(d), x), d @ x, rtol=1e-14, atol=1e-15)


def test_spmv_dimension_mismatch():
    with pytest.raises(ValueError):
        spmv(CsrMatrix.identity(3), np.ones(2))


def test_duplicates_are_summed():
    a = CsrMatrix.from_coo(2, 2, [0, 0, 1, 0], [1, 1, 0, 1], [1.0, 2.0, 5.0, 0.5])
    np.testing.assert_array_equal(a.to_dense(), [[0.0, 3.5], [5.0, 0.0]])
    assert a.nnz == 2
    check_csr(a)


def test_invalid_csr_rejected():
    with pytest.raises(CsrError):
        CsrMatrix(2, 2, np.array([0, 2, 1]), np.array([0, 1]), np.array([1.0, 1.0]))
    with pytest.raises(CsrError):
        CsrMatrix(2, 2, np.array([0, 1, 2]), np.array([0, 2]), np.array([1.0, 1.0]))
    with pytest.raises(CsrError):
        # unsorted columns within a row
        CsrMatrix(1, 3, np.array([0, 2]), np.array([2, 0]), np.array([1.0, 1.0]))


def test_indices_are_int64():
    a = CsrMatrix.from_dense(np.eye(3))
    assert a.row_offsets.dtype == np.int64 and a.col_indices.dtype == np.int64


def test_transpose_small():
    a = CsrMatrix.from_dense(np.array([[1.0, 2.0], [0.0, 3.0]]))
    np.testing.assert_array_equal(transpose(a).to_dense(), [[1.0, 0.0], [2.0, 3.0]])


def test_transpose_symmetric_is_identity(rng):
    d = random_sparse(rng, 7, 7, 0.3)
    d = d + d.T
    a = CsrMatrix.from_dense(d)
    t = transpose(a)
    assert t.structurally_equal(a)
    np.testing.assert_array_equal(t.values, a.values)


def test_transpose_adjoint_identity(rng):
    d = random_sparse(rng, 6, 4, 0.5)
    a = CsrMatrix.from_dense(d)
    x, y = rng.standard_normal(4), rng.standard_normal(6)
    lhs = spmv(transpose(a), y) @ x
    rhs = y @ spmv(a, x)
    assert abs(lhs - rhs) <= 1e-14 * max(1.0, abs(rhs))


def test_extract_full_range_is_copy(rng):
    a = CsrMatrix.from_dense(random_sparse(rng, 5, 6, 0.5))
    b = extract_block(a, (0, 5), (0, 6))
    np.testing.assert_array_equal(b.to_dense(), a.to_dense())


def test_extract_empty_range():
    b = extract_block(CsrMatrix.identity(4), (2, 2), (1, 1))
    assert b.shape == (0, 0) and b.nnz == 0


def test_extract_arrowhead_matches_dense_slice():
    d = np.eye(5) * 4.0
    d[0, :] = 1.0
    d[:, 0] = 1.0
    b = extract_block(CsrMatrix.from_dense(d), (0, 3), (2, 5))
    np.testing.assert_array_equal(b.to_dense(), d[0:3, 2:5])


def test_extract_out_of_range():
    with pytest.raises(IndexError):
        extract_block(CsrMatrix.identity(3), (0, 4), (0, 3))


def test_add_and_block(rng):
    a = random_sparse(rng, 3, 3, 0.5)
    b = random_sparse(rng, 3, 3, 0.5)
    np.testing.assert_allclose(add(CsrMatrix.from_dense(a), CsrMatrix.from_dense(b), 2.0, -1.0)
                               .to_dense(), 2 * a - b)
    c = random_sparse(rng, 2, 3, 0.7)
    m = block([[CsrMatrix.from_dense(a), CsrMatrix.from_dense(c.T)],
               [CsrMatrix.from_dense(c), None]])
    expect = np.block([[a, c.T], [c, np.zeros((2, 2))]])
    np.testing.assert_array_equal(m.to_dense(), expect)


def test_block_index_map():
    idx = BlockIndexMap(3, 3, 2)
    x = np.arange(8.0)
    u, p = idx.split(x)
    assert idx.n == 8 and idx.n_u == 6
    np.testing.assert_array_equal(p, [6.0, 7.0])
    np.testing.assert_array_equal(x[idx.uy], [3.0, 4.0, 5.0])


@st.composite
def sparse_and_vectors(draw):
    m = draw(st.integers(1, 12))
    n = draw(st.integers(1, 12))
    elems = st.floats(-10, 10, allow_nan=False, width=64)
    d = draw(hnp.arrays(np.float64, (m, n), elements=elems))
    mask = draw(hnp.arrays(np.bool_, (m, n)))
    x = draw(hnp.arrays(np.float64, n, elements=elems))
    y = draw(hnp.arrays(np.float64, m, elements=elems))
    return d * mask, x, y


@settings(max_examples=150, deadline=None)
@given(sparse_and_vectors())
def test_property_adjoint(data):
    d, x, y = data
    a = CsrMatrix.from_dense(d)
    check_csr(a)
    t = transpose(a)
    check_csr(t)
    lhs = y @ spmv(a, x)
    rhs = spmv(t, y) @ x
    scale = np.abs(y) @ np.abs(d) @ np.abs(x)
    assert abs(lhs - rhs) <= 1e-13 * max(scale, 1e-300)


@settings(max_examples=100, deadline=None)
@given(sparse_and_vectors(), st.data())
def test_property_operations_keep_valid_csr(data, draw):
    d, _, _ = data
    m, n = d.shape
    a = CsrMatrix.from_dense(d)
    r0 = draw.draw(st.integers(0, m))
    r1 = draw.draw(st.integers(r0, m))
    c0 = draw.draw(st.integers(0, n))
    c1 = draw.draw(st.integers(c0, n))
    sub = extract_block(a, (r0, r1), (c0, c1))
    check_csr(sub)
    np.testing.assert_array_equal(sub.to_dense(), d[r0:r1, c0:c1])
    check_csr(add(a, a, 1.0, -1.0))
    check_csr(a.scaled(3.0))


# Matrix Market

def test_mm_roundtrip_diag(tmp_path):
    a = CsrMatrix.diag([1.0, 2.0, 3.0])
    mm_write(tmp_path / "d.mtx", a)
    b = mm_read(tmp_path / "d.mtx")
    np.testing.assert_array_equal(b.row_offsets, a.row_offsets)
    np.testing.assert_array_equal(b.col_indices, a.col_indices)
    np.testing.assert_array_equal(b.values, a.values)


def test_mm_symmetric_expands(tmp_path):
    p = tmp_path / "s.mtx"
    p.write_text("%%MatrixMarket matrix coordinate real symmetric\n"
                 "% lower triangle\n3 3 4\n1 1 2.0\n2 1 -1.0\n3 2 0.5\n3 3 4.0\n")
    a = mm_read(p)
    np.testing.assert_array_equal(a.to_dense(), [[2.0, -1.0, 0.0], [-1.0, 0.0, 0.5],
                                                 [0.0, 0.5, 4.0]])


def test_mm_random_roundtrip_bit_identical(tmp_path, rng):
    d = random_sparse(rng, 100, 100, 0.05) * 10.0 ** rng.integers(-30, 30, (100, 100))
    a = CsrMatrix.from_dense(d)
    mm_write(tmp_path / "r.mtx", a, comment="random\nsystem")
    b = mm_read(tmp_path / "r.mtx")
    assert b.structurally_equal(a)
    assert np.array_equal(b.values, a.values)


@pytest.mark.parametrize("text", [
    "%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n4\n",
    "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n",
    "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n",
    "%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 nan\n",
    "%%MatrixMarket matrix coordinate complex general\n2 2 1\n1 1 1.0 0.0\n",
    "not a header\n",
])
def test_mm_malformed(tmp_path, text):
    p = tmp_path / "bad.mtx"
    p.write_text(text)
    with pytest.raises(MatrixMarketError):
        mm_read(p)
