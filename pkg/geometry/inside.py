"""
Point-in-mesh classification by ray parity.

Every query batch shoots rays along one random direction and counts
Möller-Trumbore hits. Points whose ray grazes an edge or vertex, or that lie
on the surface, are re-cast along a fresh direction. Parity is taken over
all triangles at once, so an inward-facing inner shell bounds a cavity.
"""
from __future__ import annotations

from typing import Optional

import numpy as np

from core.runtime.errors import GeometryError
from geometry.mesh import TriangleMesh

PARALLEL_EPS = 1e-12
GRAZE_EPS = 1e-9
MAX_RECASTS = 8
PAIR_BUDGET = 1 << 20


def _random_direction(rng: np.random.Generator) -> np.ndarray:
    d = rng.normal(size=3)
    return d / np.linalg.norm(d)


def _cast(points: np.ndarray, v0: np.ndarray, e1: np.ndarray, e2: np.ndarray, d: np.ndarray):
    """Hit parity and an ambiguity flag for each point along direction ``d``."""
    pvec = np.cross(d, e2)
    det = np.einsum("ij,ij->i", e1, pvec)
    usable = np.abs(det) > PARALLEL_EPS
    inv_det = np.where(usable, 1.0 / np.where(usable, det, 1.0), 0.0)

    n_tri = len(v0)
    chunk = max(1, PAIR_BUDGET // max(n_tri, 1))
    parity = np.zeros(len(points), dtype=bool)
    ambiguous = np.zeros(len(points), dtype=bool)
    for start in range(0, len(points), chunk):
        p = points[start : start + chunk]
        tvec = p[:, None, :] - v0[None, :, :]
        u = np.einsum("ptk,tk->pt", tvec, pvec) * inv_det
        qvec = np.cross(tvec, e1[None, :, :])
        v = np.einsum("ptk,k->pt", qvec, d) * inv_det
        t = np.einsum("ptk,tk->pt", qvec, e2) * inv_det
        w = 1.0 - u - v
        margin = np.minimum(np.minimum(u, v), w)
        ahead = t > GRAZE_EPS
        hit = usable & ahead & (margin > GRAZE_EPS)
        graze = usable & (t > -GRAZE_EPS) & (np.abs(margin) <= GRAZE_EPS)
        on_surface = usable & (np.abs(t) <= GRAZE_EPS) & (margin >= -GRAZE_EPS)
        parity[start : start + chunk] = (hit.sum(axis=1) % 2) == 1
        ambiguous[start : start + chunk] = np.any(graze | on_surface, axis=1)
    return parity, ambiguous


def _parity_query(mesh: TriangleMesh, points: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    a, b, c = mesh.corners()
    e1, e2 = b - a, c - a
    nondegenerate = np.linalg.norm(np.cross(e1, e2), axis=1) > 1e-18
    v0, e1, e2 = a[nondegenerate], e1[nondegenerate], e2[nondegenerate]

    lo, hi = mesh.bounds()
    inside = np.zeros(len(points), dtype=bool)
    todo = np.flatnonzero(np.all((points >= lo - GRAZE_EPS) & (points <= hi + GRAZE_EPS), axis=1))
    for _ in range(MAX_RECASTS):
        if todo.size == 0:
            break
        parity, ambiguous = _cast(points[todo], v0, e1, e2, _random_direction(rng))
        inside[todo] = parity
        todo = todo[ambiguous]
    return inside


def occupancy_query(mesh: TriangleMesh, points: np.ndarray, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Binary occupancy (uint8) of ``points`` [N, 3] with respect to a watertight mesh."""
    if not mesh.is_watertight():
        raise GeometryError("occupancy_query needs a watertight mesh")
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    rng = rng if rng is not None else np.random.default_rng(0x5EED)
    return _parity_query(mesh, points, rng).astype(np.uint8)
