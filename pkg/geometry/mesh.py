"""
Indexed triangle meshes in unit-cube coordinates.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Tuple

import numpy as np

from core.runtime.errors import GeometryError


@dataclass
class TriangleMesh:
    vertices: np.ndarray  # [V, 3] float64
    triangles: np.ndarray  # [T, 3] int64

    def __post_init__(self) -> None:
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if not np.all(np.isfinite(self.vertices)):
            raise GeometryError("mesh has non-finite vertex coordinates")
        if self.triangles.size and (self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)):
            raise GeometryError(f"triangle index out of range for {len(self.vertices)} vertices")

    @classmethod
    def empty(cls) -> "TriangleMesh":
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def is_empty(self) -> bool:
        return self.n_triangles == 0

    def corners(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        v = self.vertices[self.triangles]
        return v[:, 0], v[:, 1], v[:, 2]

    def areas(self) -> np.ndarray:
        a, b, c = self.corners()
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def total_area(self) -> float:
        return float(self.areas().sum())

    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        if self.n_vertices == 0:
            raise GeometryError("empty mesh has no bounding box")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def edge_counts(self) -> Tuple[np.ndarray, np.ndarray]:
        """Unique undirected edges and how many triangles use each."""
        t = self.triangles
        edges = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        edges.sort(axis=1)
        return np.unique(edges, axis=0, return_counts=True)

    def is_watertight(self) -> bool:
        """Every undirected edge is shared by exactly two triangles."""
        if self.is_empty():
            return False
        _, counts = self.edge_counts()
        return bool(np.all(counts == 2))

    def compact(self) -> "TriangleMesh":
        """Drop unreferenced vertices."""
        used, inverse = np.unique(self.triangles.reshape(-1), return_inverse=True)
        return TriangleMesh(self.vertices[used], inverse.reshape(-1, 3))

    def transformed(self, scale: float, offset: np.ndarray) -> "TriangleMesh":
        return TriangleMesh(self.vertices * scale + np.asarray(offset, dtype=np.float64), self.triangles.copy())

    def flipped(self) -> "TriangleMesh":
        """Same surface with every triangle wound the other way."""
        return TriangleMesh(self.vertices.copy(), self.triangles[:, ::-1].copy())


def concatenate(meshes: Iterable[TriangleMesh]) -> TriangleMesh:
    verts, tris, base = [], [], 0
    for mesh in meshes:
        verts.append(mesh.vertices)
        tris.append(mesh.triangles + base)
        base += mesh.n_vertices
    if not verts:
        return TriangleMesh.empty()
    return TriangleMesh(np.concatenate(verts), np.concatenate(tris))


def merge_vertices(mesh: TriangleMesh, decimals: int = 12) -> TriangleMesh:
    """Weld vertices whose rounded coordinates coincide and drop collapsed triangles."""
    if mesh.n_vertices == 0:
        return mesh
    keys = np.round(mesh.vertices, decimals)
    unique, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    tris = inverse.reshape(-1)[mesh.triangles]
    keep = (tris[:, 0] != tris[:, 1]) & (tris[:, 1] != tris[:, 2]) & (tris[:, 2] != tris[:, 0])
    return TriangleMesh(mesh.vertices[first], tris[keep]).compact()


def unit_cube_transform(lo: np.ndarray, hi: np.ndarray, margin: float) -> Tuple[float, np.ndarray]:
    """Uniform scale and offset mapping the box [lo, hi] into [margin, 1-margin]^3.

    The longest axis spans the target interval exactly; the others are centred.
    """
    if not 0.0 <= margin < 0.5:
        raise GeometryError(f"margin must lie in [0, 0.5), got {margin}")
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    extent = float(np.max(hi - lo))
    if not extent > 0:
        raise GeometryError("bounding box has zero extent")
    scale = (1.0 - 2.0 * margin) / extent
    offset = 0.5 - scale * (lo + hi) / 2.0
    return scale, offset


def normalize_unit_cube(mesh: TriangleMesh, margin: float = 0.05) -> TriangleMesh:
    lo, hi = mesh.bounds()
    scale, offset = unit_cube_transform(lo, hi, margin)
    return mesh.transformed(scale, offset)
