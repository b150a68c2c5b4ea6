"""Reference-triangle quadrature and Lagrange bases.

Reference coordinates ``(s, t)`` with barycentrics
``l0 = 1 - s - t, l1 = s, l2 = t``.
"""

import numpy as np

_R15 = np.sqrt(15.0)


def degree5_rule():
    """Seven-point symmetric rule, exact for polynomials of degree <= 5.

    Returns barycentric points ``(7, 3)`` and weights summing to one (the
    integral over a triangle is ``area * sum(w * f)``).
    """
    a1, b1 = (9 - 2 * _R15) / 21, (6 + _R15) / 21
    a2, b2 = (9 + 2 * _R15) / 21, (6 - _R15) / 21
    w1, w2 = (155 + _R15) / 1200, (155 - _R15) / 1200
    pts = [(1 / 3, 1 / 3, 1 / 3)]
    wts = [9 / 40]
    for a, b, w in ((a1, b1, w1), (a2, b2, w2)):
        pts += [(a, b, b), (b, a, b), (b, b, a)]
        wts += [w, w, w]
    return np.array(pts), np.array(wts)


def collapsed_gauss_rule(n):
    """Duffy-collapsed Gauss-Legendre product rule with ``n*n`` points.

    Exact for degree ``2n - 2``; used for error norms of non-polynomial data.
    """
    g, w = np.polynomial.legendre.leggauss(n)
    g = 0.5 * (g + 1.0)
    w = 0.5 * w
    u, v = np.meshgrid(g, g, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    s = u.ravel()
    t = (v * (1.0 - u)).ravel()
    wts = 2.0 * (wu * wv * (1.0 - u)).ravel()  # normalised to sum one
    return np.column_stack([1 - s - t, s, t]), wts


# barycentric gradients in reference coordinates
DLAMBDA = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


def p1_values(lam):
    return np.array(lam, dtype=float)


def p2_values(lam):
    """Values of the six P2 basis functions at barycentric points ``(nq, 3)``."""
    l0, l1, l2 = lam.T
    return np.column_stack([
        l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
        4 * l1 * l2, 4 * l2 * l0, 4 * l0 * l1,
    ])


def p2_ref_gradients(lam):
    """Reference gradients ``(nq, 6, 2)`` of the P2 basis."""
    l = lam.T
    d = DLAMBDA
    out = np.empty((lam.shape[0], 6, 2))
    for i in range(3):
        out[:, i] = (4 * l[i] - 1)[:, None] * d[i]
    for k, (i, j) in enumerate(((1, 2), (2, 0), (0, 1))):
        out[:, 3 + k] = 4 * (l[i][:, None] * d[j] + l[j][:, None] * d[i])
    return out
