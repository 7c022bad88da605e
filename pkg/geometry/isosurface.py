"""
Voxel grids and iso-surface extraction.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import mcubes
import numpy as np

from core.runtime.errors import ParameterError
from geometry.mesh import TriangleMesh, merge_vertices


@dataclass
class VoxelGrid:
    values: np.ndarray  # [N, N, N], indexed (x, y, z)
    origin: np.ndarray
    spacing: float

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        self.origin = np.asarray(self.origin, dtype=np.float64)
        if self.values.ndim != 3 or len(set(self.values.shape)) != 1:
            raise ParameterError(f"voxel grid must be N x N x N, got {self.values.shape}")
        if self.resolution < 2:
            raise ParameterError("voxel grid needs N >= 2")
        if self.values.size and (self.values.min() < -1e-9 or self.values.max() > 1 + 1e-9):
            raise ParameterError("voxel values must lie in [0, 1]")

    @property
    def resolution(self) -> int:
        return self.values.shape[0]

    @staticmethod
    def lattice(resolution: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        """Grid sample positions [N^3, 3] in C order, spanning [lo, hi] exactly."""
        if resolution < 2:
            raise ParameterError("voxel grid needs N >= 2")
        axis = np.linspace(lo, hi, resolution)
        gx, gy, gz = np.meshgrid(axis, axis, axis, indexing="ij")
        return np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)

    @classmethod
    def from_function(
        cls,
        fn: Callable[[np.ndarray], np.ndarray],
        resolution: int,
        lo: float = 0.0,
        hi: float = 1.0,
        chunk: int = 1 << 16,
    ) -> "VoxelGrid":
        points = cls.lattice(resolution, lo, hi)
        values = np.empty(len(points), dtype=np.float64)
        for start in range(0, len(points), chunk):
            values[start : start + chunk] = np.asarray(fn(points[start : start + chunk]), dtype=np.float64).reshape(-1)
        spacing = (hi - lo) / (resolution - 1)
        return cls(values.reshape(resolution, resolution, resolution), np.full(3, lo, dtype=np.float64), spacing)


def marching_cubes(grid: VoxelGrid, iso: float = 0.5) -> TriangleMesh:
    """Triangle mesh of the ``iso`` level set; empty when ``iso`` is outside the value range."""
    vmin, vmax = float(grid.values.min()), float(grid.values.max())
    if not vmin < iso < vmax:
        return TriangleMesh.empty()
    vertices, triangles = mcubes.marching_cubes(grid.values, iso)
    if len(triangles) == 0:
        return TriangleMesh.empty()
    mesh = TriangleMesh(grid.origin + grid.spacing * np.asarray(vertices, dtype=np.float64), triangles)
    return merge_vertices(mesh)
