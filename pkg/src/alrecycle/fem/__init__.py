"""Taylor-Hood P2/P1 discretization on a periodic strip."""

from .mesh import StripMesh, TaylorHoodSpace, build_mesh
from .oseen import BlockSaddleSystem, OseenCoefficients, assemble_oseen, build_oseen_system

__all__ = [
    "BlockSaddleSystem",
    "OseenCoefficients",
    "StripMesh",
    "TaylorHoodSpace",
    "assemble_oseen",
    "build_mesh",
    "build_oseen_system",
]
