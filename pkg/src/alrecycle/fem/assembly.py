"""Element-vectorised assembly of the Taylor-Hood forms on a strip mesh.

All velocity forms share one CSR pattern (the full 12x12 element coupling of
both components), so the parts of the Oseen block can be combined by adding
value arrays. Constant matrices are computed once per space and cached.
"""

from __future__ import annotations

import numpy as np

from ..linalg import CsrMatrix
from . import reference as ref
from .mesh import TaylorHoodSpace

__all__ = [
    "assemble_convection",
    "assemble_div",
    "assemble_graddiv",
    "assemble_graddiv_trace",
    "assemble_load",
    "assemble_mass",
    "assemble_pressure_laplacian",
    "assemble_pressure_mass",
    "assemble_viscous",
]


class Scatter:
    """Maps element-local matrices onto a fixed CSR pattern by summation."""

    def __init__(self, nrows, ncols, row_dofs, col_dofs):
        ne = row_dofs.shape[0]
        rows = np.broadcast_to(row_dofs[:, :, None], (ne, row_dofs.shape[1], col_dofs.shape[1]))
        cols = np.broadcast_to(col_dofs[:, None, :], rows.shape)
        keys = (rows.astype(np.int64) * ncols + cols).ravel()
        uniq, self.pos = np.unique(keys, return_inverse=True)
        r, c = uniq // ncols, uniq % ncols
        offsets = np.zeros(nrows + 1, dtype=np.int64)
        np.cumsum(np.bincount(r, minlength=nrows), out=offsets[1:])
        self.pattern = CsrMatrix(nrows, ncols, offsets, c, np.zeros(uniq.size))
        self.local_shape = rows.shape

    def __call__(self, local):
        if local.shape != self.local_shape:
            raise ValueError(f"local array {local.shape} does not match {self.local_shape}")
        vals = np.bincount(self.pos, weights=local.ravel(), minlength=self.pattern.nnz)
        return self.pattern.with_values(vals)


class _Geometry:
    """Per-element quadrature data for the degree-5 rule."""

    def __init__(self, space: TaylorHoodSpace):
        mesh = space.mesh
        X = mesh.coords
        J = np.stack([X[:, 1] - X[:, 0], X[:, 2] - X[:, 0]], axis=2)  # columns = edges
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        inv = np.empty_like(J)
        inv[:, 0, 0] = J[:, 1, 1] / det
        inv[:, 1, 1] = J[:, 0, 0] / det
        inv[:, 0, 1] = -J[:, 0, 1] / det
        inv[:, 1, 0] = -J[:, 1, 0] / det
        self.invJT = np.transpose(inv, (0, 2, 1))
        self.area = 0.5 * det

        lam, w = ref.degree5_rule()
        self.lam = lam
        self.W = self.area[:, None] * w[None, :]                     # (ne, nq)
        self.phi2 = ref.p2_values(lam)                               # (nq, 6)
        self.phi1 = ref.p1_values(lam)                               # (nq, 3)
        g2 = ref.p2_ref_gradients(lam)                               # (nq, 6, 2)
        self.grad2 = np.einsum("eij,qaj->eqai", self.invJT, g2)      # (ne, nq, 6, 2)
        self.grad1 = np.einsum("eij,aj->eai", self.invJT, ref.DLAMBDA)  # (ne, 3, 2)
        self.points = np.einsum("qk,ekd->eqd", lam, X)               # (ne, nq, 2)

        # vector basis: local function k = 6*c + a is phi_a e_c
        ne, nq = self.W.shape
        gv = np.zeros((ne, nq, 12, 2, 2))
        gv[:, :, :6, 0, :] = self.grad2
        gv[:, :, 6:, 1, :] = self.grad2
        self.vec_grad = gv                                           # (du_i/dx_j)
        self.strain = 0.5 * (gv + np.swapaxes(gv, 3, 4))
        self.div = np.concatenate([self.grad2[..., 0], self.grad2[..., 1]], axis=2)


def _geometry(space) -> _Geometry:
    if "geometry" not in space._cache:
        space._cache["geometry"] = _Geometry(space)
    return space._cache["geometry"]


def _scatter(space, kind) -> Scatter:
    key = "scatter_" + kind
    if key not in space._cache:
        vd = space.velocity_dofs()
        pd = space.pressure_dofs
        nu_, np_ = space.n_u, space.n_p
        if kind == "vv":
            s = Scatter(nu_, nu_, vd, vd)
        elif kind == "pv":
            s = Scatter(np_, nu_, pd, vd)
        elif kind == "pp":
            s = Scatter(np_, np_, pd, pd)
        else:
            raise KeyError(kind)
        space._cache[key] = s
    return space._cache[key]


def _cached(space, key, build):
    if key not in space._cache:
        space._cache[key] = build()
    return space._cache[key]


def velocity_pattern(space) -> CsrMatrix:
    """Common pattern of every velocity-velocity matrix (values zero)."""
    return _scatter(space, "vv").pattern


def _block_diag_local(local6):
    ne = local6.shape[0]
    out = np.zeros((ne, 12, 12))
    out[:, :6, :6] = local6
    out[:, 6:, 6:] = local6
    return out


def assemble_mass(space) -> CsrMatrix:
    """Velocity mass matrix ``int u . v``."""
    def build():
        g = _geometry(space)
        m = np.einsum("eq,qa,qb->eab", g.W, g.phi2, g.phi2)
        return _scatter(space, "vv")(_block_diag_local(m))
    return _cached(space, "mass", build)


def assemble_viscous(space, nu) -> CsrMatrix:
    """``2 nu int E(u) : E(v)`` with ``E`` the symmetric gradient."""
    if nu <= 0:
        raise ValueError("viscosity must be positive")

    def build():
        g = _geometry(space)
        k = 2.0 * np.einsum("eq,eqkij,eqlij->ekl", g.W, g.strain, g.strain)
        return _scatter(space, "vv")(k)
    return _cached(space, "strain", build).scaled(nu)


def assemble_graddiv(space, gamma) -> CsrMatrix:
    """``gamma int div u div v``."""
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")

    def build():
        g = _geometry(space)
        return _scatter(space, "vv")(np.einsum("eq,eqk,eql->ekl", g.W, g.div, g.div))
    return _cached(space, "graddiv", build).scaled(gamma)


def assemble_graddiv_trace(space, gamma) -> CsrMatrix:
    """``gamma int tr E(u) tr E(v)``; equals :func:`assemble_graddiv`."""
    g = _geometry(space)
    tr = np.einsum("eqkii->eqk", g.strain)
    return _scatter(space, "vv")(gamma * np.einsum("eq,eqk,eql->ekl", g.W, tr, tr))


def wind_at_points(space, w):
    """Values ``(ne, nq, 2)`` of a velocity-space vector at quadrature points."""
    g = _geometry(space)
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (space.n_u,):
        raise ValueError(f"wind must have length {space.n_u}")
    nd = space.node_dofs
    wx = w[: space.n_nodes][nd]
    wy = w[space.n_nodes:][nd]
    return np.stack([wx @ g.phi2.T, wy @ g.phi2.T], axis=2)


def assemble_convection(space, w) -> CsrMatrix:
    """``int ((w . grad) u) . v``, linear in the wind ``w``."""
    g = _geometry(space)
    wq = wind_at_points(space, w)
    adv = np.einsum("eqc,eqbc->eqb", wq, g.grad2)
    c = np.einsum("eq,qa,eqb->eab", g.W, g.phi2, adv)
    return _scatter(space, "vv")(_block_diag_local(c))


def assemble_div(space) -> CsrMatrix:
    """``B[k, i] = -int xi_k div psi_i``: the pressure gradient enters as ``B^T p``."""
    def build():
        g = _geometry(space)
        b = -np.einsum("eq,qk,eql->ekl", g.W, g.phi1, g.div)
        return _scatter(space, "pv")(b)
    return _cached(space, "div", build)


def assemble_pressure_mass(space) -> CsrMatrix:
    def build():
        g = _geometry(space)
        return _scatter(space, "pp")(np.einsum("eq,qa,qb->eab", g.W, g.phi1, g.phi1))
    return _cached(space, "pmass", build)


def assemble_pressure_laplacian(space) -> CsrMatrix:
    def build():
        g = _geometry(space)
        k = np.einsum("e,eai,ebi->eab", g.area, g.grad1, g.grad1)
        return _scatter(space, "pp")(k)
    return _cached(space, "plap", build)


def assemble_load(space, f, t=None):
    """Load vector ``int f . v`` for ``f(x, y[, t]) -> (fx, fy)``."""
    g = _geometry(space)
    x, y = g.points[..., 0], g.points[..., 1]
    fx, fy = f(x, y) if t is None else f(x, y, t)
    fx = np.broadcast_to(fx, x.shape)
    fy = np.broadcast_to(fy, x.shape)
    out = np.zeros(space.n_u)
    loc_x = np.einsum("eq,eq,qa->ea", g.W, fx, g.phi2)
    loc_y = np.einsum("eq,eq,qa->ea", g.W, fy, g.phi2)
    np.add.at(out, space.node_dofs, loc_x)
    np.add.at(out, space.node_dofs + space.n_nodes, loc_y)
    return out


def curl_load(space, u):
    """``int curl(u_h) xi_k`` for every pressure (P1) basis function."""
    g = _geometry(space)
    nd = space.node_dofs
    ux = u[: space.n_nodes][nd]
    uy = u[space.n_nodes:][nd]
    # d(uy)/dx - d(ux)/dy at quadrature points
    curl = np.einsum("ea,eqa->eq", uy, g.grad2[..., 0]) - np.einsum("ea,eqa->eq", ux, g.grad2[..., 1])
    loc = np.einsum("eq,eq,qk->ek", g.W, curl, g.phi1)
    out = np.zeros(space.n_p)
    np.add.at(out, space.pressure_dofs, loc)
    return out


def l2_error(space, u, exact, n_gauss=6):
    """``||u_h - u||_{L2}`` for ``exact(x, y) -> (ux, uy)`` by a high-order rule."""
    mesh = space.mesh
    lam, w = ref.collapsed_gauss_rule(n_gauss)
    phi = ref.p2_values(lam)
    pts = np.einsum("qk,ekd->eqd", lam, mesh.coords)
    W = mesh.areas()[:, None] * w[None, :]
    nd = space.node_dofs
    uh_x = u[: space.n_nodes][nd] @ phi.T
    uh_y = u[space.n_nodes:][nd] @ phi.T
    ex, ey = exact(pts[..., 0], pts[..., 1])
    return float(np.sqrt(np.sum(W * ((uh_x - ex) ** 2 + (uh_y - ey) ** 2))))
