"""Structured triangulation of the periodic strip ``[0,1) x [-1/2, 1/2]``.

Vertices and P2 nodes live on tensor grids, periodic in ``x``:

* vertex ``(i, j)``, ``0 <= i < Nx``, ``0 <= j <= Ny`` has id ``j*Nx + i``;
* P2 node ``(a, b)``, ``0 <= a < 2Nx``, ``0 <= b <= 2Ny`` has id
  ``b*2Nx + a``; vertex ``(i, j)`` is node ``(2i, 2j)`` and every edge
  midpoint sits on an odd refined coordinate.

Each cell is cut along its lower-left to upper-right diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["StripMesh", "TaylorHoodSpace", "build_mesh"]

Y0 = -0.5


@dataclass(frozen=True, eq=False)
class StripMesh:
    Nx: int
    Ny: int
    triangles: np.ndarray       # (ntri, 3) vertex ids, counterclockwise
    coords: np.ndarray          # (ntri, 3, 2) unwrapped vertex coordinates
    vertices: np.ndarray        # (nv, 2) vertex coordinates in [0,1) x [-1/2,1/2]
    refined: np.ndarray = field(repr=False)  # (ntri, 3, 2) refined grid coords (unwrapped)

    periodic_x = True

    @property
    def h(self) -> float:
        return max(1.0 / self.Nx, 1.0 / self.Ny)

    @property
    def n_vertices(self) -> int:
        return self.Nx * (self.Ny + 1)

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def areas(self):
        a = self.coords[:, 1] - self.coords[:, 0]
        b = self.coords[:, 2] - self.coords[:, 0]
        return 0.5 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])

    def edges(self):
        """Unique undirected edges as sorted vertex-id pairs."""
        t = self.triangles
        e = np.concatenate([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)


def build_mesh(Nx: int, Ny: int) -> StripMesh:
    if int(Nx) != Nx or int(Ny) != Ny:
        raise ValueError("cell counts must be integers")
    Nx, Ny = int(Nx), int(Ny)
    if Nx < 4 or Ny < 4:
        raise ValueError(f"need Nx >= 4 and Ny >= 4, got ({Nx}, {Ny})")
    if Nx % 2:
        raise ValueError(f"Nx must be even, got {Nx}")

    i, j = np.meshgrid(np.arange(Nx), np.arange(Ny), indexing="xy")
    i, j = i.ravel(), j.ravel()
    # unwrapped corner indices of the two triangles per cell
    def pt(a, b):
        return np.stack([a, b], axis=-1)

    lower = np.stack([pt(i, j), pt(i + 1, j), pt(i + 1, j + 1)], axis=1)
    upper = np.stack([pt(i, j), pt(i + 1, j + 1), pt(i, j + 1)], axis=1)
    corners = np.stack([lower, upper], axis=1).reshape(-1, 3, 2)  # (ntri, 3, [i, j])

    vid = (corners[..., 1] * Nx + corners[..., 0] % Nx).astype(np.int64)
    coords = np.empty(corners.shape)
    coords[..., 0] = corners[..., 0] / Nx
    coords[..., 1] = Y0 + corners[..., 1] / Ny

    vi, vj = np.meshgrid(np.arange(Nx), np.arange(Ny + 1), indexing="xy")
    vertices = np.column_stack([vi.ravel() / Nx, Y0 + vj.ravel() / Ny])
    return StripMesh(Nx, Ny, vid, coords, vertices, refined=2 * corners)


class TaylorHoodSpace:
    """Continuous P2 velocity (two components) and P1 pressure on a strip mesh.

    Local P2 node order is vertices 0, 1, 2 followed by the midpoints of
    edges (1,2), (2,0), (0,1). Global velocity layout is ``[u_x | u_y]``.
    """

    def __init__(self, mesh: StripMesh):
        from ..linalg import BlockIndexMap

        self.mesh = mesh
        nx2 = 2 * mesh.Nx
        ny2 = 2 * mesh.Ny
        self.n_nodes = nx2 * (ny2 + 1)
        r = mesh.refined
        mids = np.stack([(r[:, 1] + r[:, 2]) // 2, (r[:, 2] + r[:, 0]) // 2,
                         (r[:, 0] + r[:, 1]) // 2], axis=1)
        loc = np.concatenate([r, mids], axis=1)  # (ntri, 6, 2)
        self.node_dofs = (loc[..., 1] * nx2 + loc[..., 0] % nx2).astype(np.int64)
        self.pressure_dofs = mesh.triangles
        self.index = BlockIndexMap(self.n_nodes, self.n_nodes, mesh.n_vertices)

        a, b = np.meshgrid(np.arange(nx2), np.arange(ny2 + 1), indexing="xy")
        self.node_coords = np.column_stack([a.ravel() / nx2, Y0 + b.ravel() / ny2])
        wall = (b.ravel() == 0) | (b.ravel() == ny2)
        self.wall_nodes = np.flatnonzero(wall)
        # free slip: normal velocity u_y vanishes on both walls
        self.constrained_dofs = self.n_nodes + self.wall_nodes
        self._cache = {}

    @property
    def n_u(self) -> int:
        return self.index.n_u

    @property
    def n_p(self) -> int:
        return self.index.n_p

    def velocity_orderings(self, leaf=16):
        """Nested dissection orderings for the velocity blocks.

        Returns a dict usable as the ``orderings`` cache of
        :func:`alrecycle.precond.factor_velocity`: the same node ordering for
        each component block, and for the full block the two components of
        every node group kept together.
        """
        from ..ordering import lattice_nested_dissection

        nx2, ny1 = 2 * self.mesh.Nx, 2 * self.mesh.Ny + 1
        groups = lattice_nested_dissection(nx2, ny1, stride=2, periodic_x=True,
                                           leaf=leaf, groups=True)
        q = np.concatenate(groups)
        full = np.concatenate([np.concatenate([g, g + self.n_nodes]) for g in groups])
        return {"full": full, ("modified", 0): q, ("modified", 1): q.copy()}

    def velocity_dofs(self):
        """(ntri, 12) global dofs: six x-component then six y-component."""
        return np.concatenate([self.node_dofs, self.node_dofs + self.n_nodes], axis=1)

    def interpolate(self, fn, t=None):
        """P2 nodal interpolant of a vector field ``fn(x, y) -> (ux, uy)``."""
        x, y = self.node_coords.T
        ux, uy = fn(x, y) if t is None else fn(x, y, t)
        out = np.empty(self.n_u)
        out[: self.n_nodes] = np.broadcast_to(ux, x.shape)
        out[self.n_nodes:] = np.broadcast_to(uy, x.shape)
        return out

    def interpolate_pressure(self, fn):
        x, y = self.mesh.vertices.T
        return np.broadcast_to(np.asarray(fn(x, y), dtype=float), x.shape).copy()
