"""
Symmetric Chamfer distance on squared nearest-neighbour distances.
"""
from __future__ import annotations

import numpy as np
from scipy.spatial import KDTree

from core.runtime.errors import ParameterError


def _check(cloud: np.ndarray, label: str) -> np.ndarray:
    cloud = np.asarray(cloud, dtype=np.float64).reshape(-1, 3)
    if len(cloud) == 0:
        raise ParameterError(f"chamfer distance needs a non-empty point cloud ({label})")
    return cloud


def _one_way(src: np.ndarray, dst: np.ndarray) -> float:
    dist, _ = KDTree(dst).query(src, k=1, eps=0.0)
    return float(np.mean(dist**2))


def chamfer_distance(x: np.ndarray, y: np.ndarray) -> float:
    """mean_x min_y |x-y|^2 + mean_y min_x |x-y|^2 with exact kd-tree search."""
    x = _check(x, "x")
    y = _check(y, "y")
    return _one_way(x, y) + _one_way(y, x)


def chamfer_distance_bruteforce(x: np.ndarray, y: np.ndarray, chunk: int = 1024) -> float:
    """O(|x||y|) reference implementation."""
    x = _check(x, "x")
    y = _check(y, "y")

    def one_way(src: np.ndarray, dst: np.ndarray) -> float:
        best = np.empty(len(src))
        for start in range(0, len(src), chunk):
            diff = src[start : start + chunk, None, :] - dst[None, :, :]
            best[start : start + chunk] = np.min(np.sum(diff**2, axis=2), axis=1)
        return float(np.mean(best))

    return one_way(x, y) + one_way(y, x)
