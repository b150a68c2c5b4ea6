"""Fill-reducing symmetric ordering and symbolic factor counts.

:func:`amd_order` is an approximate minimum degree ordering on the quotient
graph of ``pattern(A) + pattern(A^T)`` (element absorption, mass
elimination, supernode detection by hashing, aggressive absorption and a
final postorder of the assembly tree). Rows whose degree exceeds
``max(16, 10 sqrt(n))`` are treated as dense and ordered last.

:func:`lattice_nested_dissection` orders nodes of a structured 2-D lattice
by recursive bisection along lattice lines. It needs no matrix and is meant
for discretizations whose coupling never crosses certain grid lines.
"""

from __future__ import annotations

import numba as nb
import numpy as np

from .linalg import CsrMatrix

__all__ = ["amd_order", "symmetric_pattern", "cholesky_fill", "natural_order",
           "lattice_nested_dissection"]


def natural_order(n):
    return np.arange(n, dtype=np.int64)


def symmetric_pattern(a: CsrMatrix, keep_diagonal=False):
    """Pattern of ``A + A^T`` as ``(indptr, indices)`` with sorted rows."""
    if a.nrows != a.ncols:
        raise ValueError(f"ordering needs a square pattern, got {a.shape}")
    n = a.nrows
    r = a.row_indices()
    c = a.col_indices
    rows = np.concatenate([r, c])
    cols = np.concatenate([c, r])
    if not keep_diagonal:
        off = rows != cols
        rows, cols = rows[off], cols[off]
    key = np.unique(rows * n + cols)
    rows, cols = key // n, key % n
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
    return indptr, cols.astype(np.int64)


@nb.njit(cache=True)
def _wclear(mark, lemax, w, n):
    if mark < 2 or mark + lemax < 0:
        for k in range(n):
            if w[k] != 0:
                w[k] = 1
        mark = 2
    return mark


@nb.njit(cache=True)
def _tdfs(j, k, head, nxt, post, stack):
    top = 0
    stack[0] = j
    while top >= 0:
        p = stack[top]
        i = head[p]
        if i == -1:
            top -= 1
            post[k] = p
            k += 1
        else:
            head[p] = nxt[i]
            top += 1
            stack[top] = i
    return k


@nb.njit(cache=True)
def _amd(n, Cp, Ci, cnz):
    # Cp has n+1 entries, Ci has elbow room beyond cnz; both are overwritten.
    nzmax = Ci.size
    dense = max(16, int(10.0 * np.sqrt(float(n))))
    dense = min(n - 2, dense)

    P = np.empty(n + 1, dtype=np.int64)
    length = np.empty(n + 1, dtype=np.int64)
    nv = np.empty(n + 1, dtype=np.int64)
    nxt = np.empty(n + 1, dtype=np.int64)
    head = np.empty(n + 1, dtype=np.int64)
    elen = np.empty(n + 1, dtype=np.int64)
    degree = np.empty(n + 1, dtype=np.int64)
    w = np.empty(n + 1, dtype=np.int64)
    hhead = np.empty(n + 1, dtype=np.int64)
    last = P

    for k in range(n):
        length[k] = Cp[k + 1] - Cp[k]
    length[n] = 0
    for i in range(n + 1):
        head[i] = -1
        last[i] = -1
        nxt[i] = -1
        hhead[i] = -1
        nv[i] = 1
        w[i] = 1
        elen[i] = 0
        degree[i] = length[i]
    mark = _wclear(0, 0, w, n)
    elen[n] = -2
    Cp[n] = -1
    w[n] = 0
    nel = 0
    mindeg = 0
    lemax = 0

    for i in range(n):
        d = degree[i]
        if d == 0:
            elen[i] = -2
            nel += 1
            Cp[i] = -1
            w[i] = 0
        elif d > dense:
            nv[i] = 0
            elen[i] = -1
            nel += 1
            Cp[i] = -n - 2  # flip(n)
            nv[n] += 1
        else:
            if head[d] != -1:
                last[head[d]] = i
            nxt[i] = head[d]
            head[d] = i

    while nel < n:
        # node of minimum approximate degree
        k = -1
        while mindeg < n:
            k = head[mindeg]
            if k != -1:
                break
            mindeg += 1
        if nxt[k] != -1:
            last[nxt[k]] = -1
        head[mindeg] = nxt[k]
        elenk = elen[k]
        nvk = nv[k]
        nel += nvk

        # garbage collection
        if elenk > 0 and cnz + mindeg >= nzmax:
            for j in range(n):
                p = Cp[j]
                if p >= 0:
                    Cp[j] = Ci[p]
                    Ci[p] = -j - 2
            q = 0
            p = 0
            while p < cnz:
                j = -Ci[p] - 2
                p += 1
                if j >= 0:
                    Ci[q] = Cp[j]
                    Cp[j] = q
                    q += 1
                    for _ in range(length[j] - 1):
                        Ci[q] = Ci[p]
                        q += 1
                        p += 1
            cnz = q

        # new element Lk
        dk = 0
        nv[k] = -nvk
        p = Cp[k]
        pk1 = p if elenk == 0 else cnz
        pk2 = pk1
        for k1 in range(1, elenk + 2):
            if k1 > elenk:
                e = k
                pj = p
                ln = length[k] - elenk
            else:
                e = Ci[p]
                p += 1
                pj = Cp[e]
                ln = length[e]
            for _ in range(ln):
                i = Ci[pj]
                pj += 1
                nvi = nv[i]
                if nvi <= 0:
                    continue
                dk += nvi
                nv[i] = -nvi
                Ci[pk2] = i
                pk2 += 1
                if nxt[i] != -1:
                    last[nxt[i]] = last[i]
                if last[i] != -1:
                    nxt[last[i]] = nxt[i]
                else:
                    head[degree[i]] = nxt[i]
            if e != k:
                Cp[e] = -k - 2
                w[e] = 0
        if elenk != 0:
            cnz = pk2
        degree[k] = dk
        Cp[k] = pk1
        length[k] = pk2 - pk1
        elen[k] = -2

        # set differences |Le \ Lk|
        mark = _wclear(mark, lemax, w, n)
        for pk in range(pk1, pk2):
            i = Ci[pk]
            eln = elen[i]
            if eln <= 0:
                continue
            nvi = -nv[i]
            wnvi = mark - nvi
            for p in range(Cp[i], Cp[i] + eln):
                e = Ci[p]
                if w[e] >= mark:
                    w[e] -= nvi
                elif w[e] != 0:
                    w[e] = degree[e] + wnvi

        # degree update
        for pk in range(pk1, pk2):
            i = Ci[pk]
            p1 = Cp[i]
            p2 = p1 + elen[i] - 1
            pn = p1
            h = 0
            d = 0
            for p in range(p1, p2 + 1):
                e = Ci[p]
                if w[e] != 0:
                    dext = w[e] - mark
                    if dext > 0:
                        d += dext
                        Ci[pn] = e
                        pn += 1
                        h += e
                    else:
                        Cp[e] = -k - 2  # aggressive absorption
                        w[e] = 0
            elen[i] = pn - p1 + 1
            p3 = pn
            p4 = p1 + length[i]
            for p in range(p2 + 1, p4):
                j = Ci[p]
                nvj = nv[j]
                if nvj <= 0:
                    continue
                d += nvj
                Ci[pn] = j
                pn += 1
                h += j
            if d == 0:
                # mass elimination
                Cp[i] = -k - 2
                nvi = -nv[i]
                dk -= nvi
                nvk += nvi
                nel += nvi
                nv[i] = 0
                elen[i] = -1
            else:
                degree[i] = min(degree[i], d)
                Ci[pn] = Ci[p3]
                Ci[p3] = Ci[p1]
                Ci[p1] = k
                length[i] = pn - p1 + 1
                h = h % n
                nxt[i] = hhead[h]
                hhead[h] = i
                last[i] = h
        degree[k] = dk
        lemax = max(lemax, dk)
        mark = _wclear(mark + lemax, lemax, w, n)

        # supernode detection
        for pk in range(pk1, pk2):
            i = Ci[pk]
            if nv[i] >= 0:
                continue
            h = last[i]
            i = hhead[h]
            hhead[h] = -1
            while i != -1 and nxt[i] != -1:
                ln = length[i]
                eln = elen[i]
                for p in range(Cp[i] + 1, Cp[i] + ln):
                    w[Ci[p]] = mark
                jlast = i
                j = nxt[i]
                while j != -1:
                    ok = length[j] == ln and elen[j] == eln
                    p = Cp[j] + 1
                    while ok and p <= Cp[j] + ln - 1:
                        if w[Ci[p]] != mark:
                            ok = False
                        p += 1
                    if ok:
                        Cp[j] = -i - 2
                        nv[i] += nv[j]
                        nv[j] = 0
                        elen[j] = -1
                        j = nxt[j]
                        nxt[jlast] = j
                    else:
                        jlast = j
                        j = nxt[j]
                i = nxt[i]
                mark += 1

        # finalize Lk
        p = pk1
        for pk in range(pk1, pk2):
            i = Ci[pk]
            nvi = -nv[i]
            if nvi <= 0:
                continue
            nv[i] = nvi
            d = degree[i] + dk - nvi
            d = min(d, n - nel - nvi)
            if head[d] != -1:
                last[head[d]] = i
            nxt[i] = head[d]
            last[i] = -1
            head[d] = i
            mindeg = min(mindeg, d)
            degree[i] = d
            Ci[p] = i
            p += 1
        nv[k] = nvk
        length[k] = p - pk1
        if length[k] == 0:
            Cp[k] = -1
            w[k] = 0
        if elenk != 0:
            cnz = p

    # postorder the assembly tree
    for i in range(n):
        Cp[i] = -Cp[i] - 2
    for j in range(n + 1):
        head[j] = -1
    for j in range(n, -1, -1):
        if nv[j] > 0:
            continue
        nxt[j] = head[Cp[j]]
        head[Cp[j]] = j
    for e in range(n, -1, -1):
        if nv[e] <= 0:
            continue
        if Cp[e] != -1:
            nxt[e] = head[Cp[e]]
            head[Cp[e]] = e
    k = 0
    for i in range(n + 1):
        if Cp[i] == -1:
            k = _tdfs(i, k, head, nxt, P, w)
    return P[:n].copy()


def amd_order(pattern: CsrMatrix) -> np.ndarray:
    """Approximate minimum degree permutation of ``pattern + pattern^T``.

    Only the sparsity structure of ``pattern`` is used. Returns ``perm``
    such that ``A[perm][:, perm]`` is the reordered matrix.
    """
    indptr, indices = symmetric_pattern(pattern)
    n = pattern.nrows
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    if n <= 2:
        return natural_order(n)
    cnz = int(indptr[-1])
    Ci = np.empty(cnz + cnz // 5 + 2 * n, dtype=np.int64)
    Ci[:cnz] = indices
    perm = _amd(n, indptr.copy(), Ci, cnz)
    return perm


@nb.njit(cache=True)
def _chol_counts(n, Cp, Ci, perm):
    # nnz of the Cholesky factor of P (A + A^T) P^T, diagonal included
    pinv = np.empty(n, dtype=np.int64)
    for k in range(n):
        pinv[perm[k]] = k
    # permuted, upper pattern by columns: for column k, rows i < k
    cnt = np.zeros(n + 1, dtype=np.int64)
    for j in range(n):
        for p in range(Cp[j], Cp[j + 1]):
            i = Ci[p]
            a, b = pinv[i], pinv[j]
            if a < b:
                cnt[b + 1] += 1
    for k in range(n):
        cnt[k + 1] += cnt[k]
    rows = np.empty(cnt[n], dtype=np.int64)
    fill = cnt[:n].copy()
    for j in range(n):
        for p in range(Cp[j], Cp[j + 1]):
            i = Ci[p]
            a, b = pinv[i], pinv[j]
            if a < b:
                rows[fill[b]] = a
                fill[b] += 1
    parent = np.full(n, -1, dtype=np.int64)
    ancestor = np.full(n, -1, dtype=np.int64)
    for k in range(n):
        for p in range(cnt[k], cnt[k + 1]):
            i = rows[p]
            while i != -1 and i < k:
                inext = ancestor[i]
                ancestor[i] = k
                if inext == -1:
                    parent[i] = k
                i = inext
    flag = np.full(n, -1, dtype=np.int64)
    total = 0
    for k in range(n):
        flag[k] = k
        total += 1
        for p in range(cnt[k], cnt[k + 1]):
            i = rows[p]
            while flag[i] != k:
                flag[i] = k
                total += 1
                i = parent[i]
    return total


def cholesky_fill(pattern: CsrMatrix, perm=None) -> int:
    """Entries of the Cholesky factor of the symmetrized pattern under ``perm``.

    Computed from the elimination tree in time proportional to the result.
    For an LU factorization whose pivots stay on the diagonal,
    ``nnz(L) + nnz(U) = 2 * cholesky_fill - n`` (unit diagonal of ``L`` not
    stored).
    """
    n = pattern.nrows
    if perm is None:
        perm = natural_order(n)
    indptr, indices = symmetric_pattern(pattern)
    return int(_chol_counts(n, indptr, indices, np.asarray(perm, dtype=np.int64)))


def lattice_nested_dissection(nx, ny, stride=1, periodic_x=False, leaf=16, groups=False):
    """Nested dissection ordering of an ``nx`` by ``ny`` lattice.

    Node ``(a, b)`` has id ``b*nx + a``. The lattice is split recursively
    along its longer side, with the separator line ordered after both halves.
    Separators are lines ``a`` or ``b`` that are multiples of ``stride``; the
    ordering is a valid elimination order for any pattern in which two nodes
    are coupled only if no such line lies strictly between them (``stride=2``
    for P2 nodes of a triangulated grid, whose even lines carry no element
    interiors). With ``periodic_x`` the line ``a = 0`` is removed first to cut
    the ring. Boxes with at most ``leaf`` nodes, or without an interior
    separator, are emitted row by row.

    Parameters
    ----------
    groups : bool
        Return the list of node groups (leaves and separators, in elimination
        order) instead of the concatenated permutation.
    """
    if nx < 1 or ny < 1 or stride < 1:
        raise ValueError("lattice sizes and stride must be positive")
    out = []

    def box(a0, a1, b0, b1):
        a = np.arange(a0, a1, dtype=np.int64)
        b = np.arange(b0, b1, dtype=np.int64)
        return (b[:, None] * nx + a[None, :]).ravel()

    def cut(lo, hi):
        # separator line strictly inside [lo, hi), on the stride lattice
        c = lo + (hi - lo) // 2
        c -= c % stride
        if c <= lo:
            c += stride
        return c if c < hi - 1 else None

    def rec(a0, a1, b0, b1):
        wa, wb = a1 - a0, b1 - b0
        if wa <= 0 or wb <= 0:
            return
        if wa * wb > leaf:
            for along_a in ((True, False) if wa >= wb else (False, True)):
                lo, hi = (a0, a1) if along_a else (b0, b1)
                c = cut(lo, hi)
                if c is None:
                    continue
                if along_a:
                    rec(a0, c, b0, b1)
                    rec(c + 1, a1, b0, b1)
                    out.append(box(c, c + 1, b0, b1))
                else:
                    rec(a0, a1, b0, c)
                    rec(a0, a1, c + 1, b1)
                    out.append(box(a0, a1, c, c + 1))
                return
        out.append(box(a0, a1, b0, b1))

    if periodic_x and nx > 1:
        rec(1, nx, 0, ny)
        out.append(box(0, 1, 0, ny))
    else:
        rec(0, nx, 0, ny)
    return out if groups else np.concatenate(out)
