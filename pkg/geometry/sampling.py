"""
Area-uniform surface sampling and Monte Carlo volume ratios.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

from core.runtime.errors import GeometryError, ParameterError
from geometry.mesh import TriangleMesh

OccupancyOracle = Callable[[np.ndarray], np.ndarray]

MC_CHUNK = 1 << 18


def surface_sample_with_faces(mesh: TriangleMesh, n: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    if n < 1:
        raise ParameterError(f"surface_sample needs n >= 1, got {n}")
    areas = mesh.areas() if not mesh.is_empty() else np.zeros(0)
    total = float(areas.sum())
    if not total > 0:
        raise GeometryError("cannot sample a mesh with zero surface area")
    faces = rng.choice(len(areas), size=n, p=areas / total)
    r1 = rng.random(n)
    r2 = rng.random(n)
    s = np.sqrt(r1)
    bary = np.stack([1.0 - s, s * (1.0 - r2), s * r2], axis=1)
    corners = mesh.vertices[mesh.triangles[faces]]
    return np.einsum("nk,nkd->nd", bary, corners), faces


def surface_sample(mesh: TriangleMesh, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` points drawn area-uniformly from the mesh surface."""
    return surface_sample_with_faces(mesh, n, rng)[0]


@dataclass(frozen=True)
class VolumeEstimate:
    fraction: float
    stderr: float
    n: int

    def within(self, lo: float, hi: float, k: float = 0.0) -> bool:
        return lo - k * self.stderr <= self.fraction <= hi + k * self.stderr


def ratio_estimate(inner: np.ndarray, outer: np.ndarray) -> VolumeEstimate:
    """Ratio of two indicator sums with a delta-method standard error."""
    inner = np.asarray(inner, dtype=np.float64)
    outer = np.asarray(outer, dtype=np.float64)
    n = len(outer)
    n_outer = float(outer.sum())
    if n_outer == 0:
        raise GeometryError("outer volume estimate is zero")
    ratio = float(inner.sum()) / n_outer
    residual = inner - ratio * outer
    var = float(np.mean(residual**2)) / (n * (n_outer / n) ** 2)
    return VolumeEstimate(fraction=ratio, stderr=float(np.sqrt(var)), n=n)


def volume_fraction(inner: OccupancyOracle, outer: OccupancyOracle, n: int, rng: np.random.Generator) -> VolumeEstimate:
    """Monte Carlo estimate of volume(inner) / volume(outer) over the unit cube."""
    if n < 10_000:
        raise ParameterError(f"volume_fraction needs at least 1e4 samples, got {n}")
    a = np.empty(n, dtype=bool)
    b = np.empty(n, dtype=bool)
    for start in range(0, n, MC_CHUNK):
        stop = min(n, start + MC_CHUNK)
        x = rng.random((stop - start, 3))
        a[start:stop] = np.asarray(inner(x), dtype=bool)
        b[start:stop] = np.asarray(outer(x), dtype=bool)
    return ratio_estimate(a, b)


def unit_cube(points: np.ndarray) -> np.ndarray:
    """Occupancy oracle of [0, 1]^3."""
    return np.all((points >= 0.0) & (points <= 1.0), axis=1)
