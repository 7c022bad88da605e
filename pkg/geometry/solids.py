"""
Watertight procedural solids with exact occupancy oracles.

Each solid owns a triangle mesh and a ``contains`` test that agrees with ray
parity on that very mesh (not with the smooth shape the mesh approximates),
so labels, meshes and surface samples always describe the same set.
"""
from __future__ import annotations

from abc import ABC, abstractmethod
from typing import List, Sequence

import numpy as np

from core.runtime.errors import GeometryError, ParameterError
from geometry.inside import occupancy_query
from geometry.mesh import TriangleMesh, concatenate, unit_cube_transform
from geometry.sampling import surface_sample, surface_sample_with_faces


class Solid(ABC):
    @abstractmethod
    def contains(self, points: np.ndarray) -> np.ndarray:
        """Boolean membership of ``points`` [N, 3]."""

    @abstractmethod
    def mesh(self) -> TriangleMesh: ...

    def sample_surface(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return surface_sample(self.mesh(), n, rng)

    def normalized(self, margin: float = 0.05) -> "AffineSolid":
        lo, hi = self.mesh().bounds()
        scale, offset = unit_cube_transform(lo, hi, margin)
        return AffineSolid(self, scale, offset)


class BoxSolid(Solid):
    _CORNERS = np.array([[i >> 2 & 1, i >> 1 & 1, i & 1] for i in range(8)], dtype=np.float64)
    _FACES = np.array(
        [
            [0, 1, 3], [0, 3, 2],  # x = lo
            [4, 6, 7], [4, 7, 5],  # x = hi
            [0, 4, 5], [0, 5, 1],  # y = lo
            [2, 3, 7], [2, 7, 6],  # y = hi
            [0, 2, 6], [0, 6, 4],  # z = lo
            [1, 5, 7], [1, 7, 3],  # z = hi
        ],
        dtype=np.int64,
    )

    def __init__(self, lo: Sequence[float], hi: Sequence[float]) -> None:
        self.lo = np.asarray(lo, dtype=np.float64)
        self.hi = np.asarray(hi, dtype=np.float64)
        if np.any(self.hi <= self.lo):
            raise GeometryError(f"box has non-positive extent: {self.lo} .. {self.hi}")
        self._mesh = TriangleMesh(self.lo + self._CORNERS * (self.hi - self.lo), self._FACES)

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return np.all((points >= self.lo) & (points <= self.hi), axis=1)

    def mesh(self) -> TriangleMesh:
        return self._mesh


def _inside_polygon(u: np.ndarray, v: np.ndarray, polygon: np.ndarray) -> np.ndarray:
    """Crossing-number test of points (u, v) against a closed polygon [M, 2]."""
    inside = np.zeros(u.shape, dtype=bool)
    nxt = np.roll(polygon, -1, axis=0)
    for (u1, v1), (u2, v2) in zip(polygon, nxt):
        if v1 == v2:
            continue
        straddles = (v1 > v) != (v2 > v)
        u_cross = u1 + (v - v1) * (u2 - u1) / (v2 - v1)
        inside ^= straddles & (u < u_cross)
    return inside


class LatheSolid(Solid):
    """Polygonal profile revolved about a z-parallel axis as a k-sided faceted solid.

    ``profile`` is an open polyline of (radius, z) points starting and ending
    on the axis (radius 0); the axis segment closes it.
    """

    def __init__(self, profile: Sequence[Sequence[float]], center_xy: Sequence[float] = (0.0, 0.0), segments: int = 32) -> None:
        self.profile = np.asarray(profile, dtype=np.float64).reshape(-1, 2)
        self.center = np.asarray(center_xy, dtype=np.float64)
        self.segments = int(segments)
        if self.segments < 3:
            raise ParameterError("a lathe needs at least 3 segments")
        if len(self.profile) < 3:
            raise ParameterError("a lathe profile needs at least 3 points")
        if self.profile[0, 0] != 0.0 or self.profile[-1, 0] != 0.0:
            raise ParameterError("lathe profile must start and end on the axis")
        if np.any(self.profile[1:-1, 0] <= 0.0):
            raise ParameterError("interior lathe profile points must have positive radius")
        self._mesh = self._build_mesh()

    @classmethod
    def sphere(cls, center: Sequence[float], radius: float, segments: int = 48, rings: int = 24) -> "LatheSolid":
        angles = np.linspace(0.0, np.pi, rings + 1)
        profile = np.stack([radius * np.sin(angles), center[2] - radius * np.cos(angles)], axis=1)
        profile[0, 0] = profile[-1, 0] = 0.0
        return cls(profile, center[:2], segments)

    @classmethod
    def cylinder(cls, center_xy: Sequence[float], radius: float, z0: float, z1: float, segments: int = 32) -> "LatheSolid":
        return cls([(0.0, z0), (radius, z0), (radius, z1), (0.0, z1)], center_xy, segments)

    def _build_mesh(self) -> TriangleMesh:
        k = self.segments
        phi = 2.0 * np.pi * np.arange(k) / k
        cos, sin = np.cos(phi), np.sin(phi)
        vertices: List[np.ndarray] = []
        index: List[np.ndarray] = []
        base = 0
        for rho, z in self.profile:
            if rho == 0.0:
                vertices.append(np.array([[self.center[0], self.center[1], z]]))
                index.append(np.full(k, base))
                base += 1
            else:
                ring = np.stack([self.center[0] + rho * cos, self.center[1] + rho * sin, np.full(k, z)], axis=1)
                vertices.append(ring)
                index.append(base + np.arange(k))
                base += k
        faces = []
        j = np.arange(k)
        jn = (j + 1) % k
        for a, b, (rho_a, _), (rho_b, _) in zip(index[:-1], index[1:], self.profile[:-1], self.profile[1:]):
            if rho_a == 0.0:
                faces.append(np.stack([a[j], b[j], b[jn]], axis=1))
            elif rho_b == 0.0:
                faces.append(np.stack([a[j], b[j], a[jn]], axis=1))
            else:
                faces.append(np.stack([a[j], b[j], b[jn]], axis=1))
                faces.append(np.stack([a[j], b[jn], a[jn]], axis=1))
        return TriangleMesh(np.concatenate(vertices), np.concatenate(faces))

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        dx = points[:, 0] - self.center[0]
        dy = points[:, 1] - self.center[1]
        r = np.hypot(dx, dy)
        theta = np.arctan2(dy, dx)
        wedge = 2.0 * np.pi / self.segments
        j = np.floor(theta / wedge) % self.segments
        mid = (j + 0.5) * wedge
        rho = r * np.cos(theta - mid) / np.cos(wedge / 2.0)
        return _inside_polygon(rho, points[:, 2], self.profile)

    def mesh(self) -> TriangleMesh:
        return self._mesh


class AffineSolid(Solid):
    """``inner`` scaled uniformly by ``scale`` then shifted by ``offset``."""

    def __init__(self, inner: Solid, scale: float, offset: Sequence[float]) -> None:
        if not scale > 0:
            raise GeometryError("affine scale must be positive")
        self.inner = inner
        self.scale = float(scale)
        self.offset = np.asarray(offset, dtype=np.float64)
        self._mesh = inner.mesh().transformed(self.scale, self.offset)

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return self.inner.contains((points - self.offset) / self.scale)

    def mesh(self) -> TriangleMesh:
        return self._mesh

    def sample_surface(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.inner.sample_surface(n, rng) * self.scale + self.offset


class UnionSolid(Solid):
    """Overlapping watertight parts; the surface excludes faces buried in another part."""

    def __init__(self, parts: Sequence[Solid]) -> None:
        if not parts:
            raise ParameterError("a union needs at least one part")
        self.parts = list(parts)
        self._mesh = concatenate(p.mesh() for p in self.parts)
        sizes = [p.mesh().n_triangles for p in self.parts]
        self._face_part = np.repeat(np.arange(len(self.parts)), sizes)

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        inside = np.zeros(len(points), dtype=bool)
        for part in self.parts:
            inside |= part.contains(points)
        return inside

    def mesh(self) -> TriangleMesh:
        return self._mesh

    def sample_surface(self, n: int, rng: np.random.Generator) -> np.ndarray:
        kept: List[np.ndarray] = []
        have = 0
        for _ in range(64):
            points, faces = surface_sample_with_faces(self._mesh, max(2 * (n - have), 64), rng)
            owner = self._face_part[faces]
            buried = np.zeros(len(points), dtype=bool)
            for k, part in enumerate(self.parts):
                others = owner != k
                if np.any(others):
                    buried[others] |= part.contains(points[others])
            fresh = points[~buried]
            kept.append(fresh)
            have += len(fresh)
            if have >= n:
                return np.concatenate(kept)[:n]
        raise GeometryError("union surface is almost entirely buried")


class MeshSolid(Solid):
    """An arbitrary watertight mesh; membership by ray parity."""

    def __init__(self, mesh: TriangleMesh) -> None:
        if not mesh.is_watertight():
            raise GeometryError("mesh is not watertight")
        self._mesh = mesh

    def contains(self, points: np.ndarray) -> np.ndarray:
        return occupancy_query(self._mesh, points).astype(bool)

    def mesh(self) -> TriangleMesh:
        return self._mesh
