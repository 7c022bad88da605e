"""
Labelled occupancy samples (x, o_C, o_B) per shape instance.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from core.runtime.errors import FractureError, ParameterError
from fracture.instance import ShapeInstance


@dataclass
class OccupancySampleSet:
    """Stored labels are o_C and o_B only; o_F and o_R are derived."""

    points: np.ndarray  # [N, 3] float32
    o_c: np.ndarray  # [N] uint8
    o_b: np.ndarray  # [N] uint8

    def __post_init__(self) -> None:
        self.points = np.ascontiguousarray(self.points, dtype=np.float32).reshape(-1, 3)
        self.o_c = np.ascontiguousarray(self.o_c, dtype=np.uint8).reshape(-1)
        self.o_b = np.ascontiguousarray(self.o_b, dtype=np.uint8).reshape(-1)
        if not len(self.points) == len(self.o_c) == len(self.o_b):
            raise ParameterError("points and labels differ in length")
        if np.any(self.o_c > 1) or np.any(self.o_b > 1):
            raise ParameterError("occupancy labels must be binary")

    def __len__(self) -> int:
        return len(self.points)

    @property
    def o_f(self) -> np.ndarray:
        return self.o_c * self.o_b

    @property
    def o_r(self) -> np.ndarray:
        return self.o_c * (1 - self.o_b)

    def subset(self, index: np.ndarray) -> "OccupancySampleSet":
        return OccupancySampleSet(self.points[index], self.o_c[index], self.o_b[index])

    def require_both_parts(self, instance_id: str = "?") -> None:
        if not self.o_f.any():
            raise FractureError(f"instance {instance_id}: no sample inside the fractured part")
        if not self.o_r.any():
            raise FractureError(f"instance {instance_id}: no sample inside the restoration part")


def sample_points(
    instance: ShapeInstance,
    n_uniform: int,
    n_surface: int,
    sigma: float,
    rng: np.random.Generator,
) -> OccupancySampleSet:
    """Uniform cube samples plus Gaussian-jittered complete-surface samples, exactly labelled."""
    if n_uniform < 0 or n_surface < 0 or n_uniform + n_surface < 1:
        raise ParameterError("need n_uniform, n_surface >= 0 with at least one sample")
    parts = [rng.random((n_uniform, 3))]
    if n_surface:
        near = instance.solid.sample_surface(n_surface, rng)
        if sigma > 0:
            near = near + rng.normal(scale=sigma, size=near.shape)
        parts.append(np.clip(near, 0.0, 1.0))
    # label the float32 coordinates that will be stored
    points = np.concatenate(parts).astype(np.float32)
    exact = points.astype(np.float64)
    o_c = instance.solid.contains(exact).astype(np.uint8)
    o_b = instance.break_set.contains(exact).astype(np.uint8)
    return OccupancySampleSet(points, o_c, o_b)
