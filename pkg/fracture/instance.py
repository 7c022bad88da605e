"""
A complete shape together with its break set.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np

from core.schemas.contracts import InstanceRecord
from fracture.breaks import BreakSet, sample_part_surface
from fracture.shapes import ProceduralShape, build_solid
from geometry.isosurface import VoxelGrid, marching_cubes
from geometry.mesh import TriangleMesh
from geometry.solids import Solid

Part = Literal["C", "F", "R"]


@dataclass
class ShapeInstance:
    instance_id: str
    class_name: str
    shape: ProceduralShape
    break_set: BreakSet
    measured_fraction: Optional[float] = None

    @classmethod
    def from_record(cls, record: InstanceRecord, class_name: str) -> "ShapeInstance":
        solid = build_solid(record.shape)
        return cls(
            instance_id=record.instance_id,
            class_name=class_name,
            shape=ProceduralShape(params=record.shape, solid=solid),
            break_set=BreakSet.from_descriptor(record.break_set),
            measured_fraction=record.measured_fraction,
        )

    @property
    def solid(self) -> Solid:
        return self.shape.solid

    @property
    def mesh_c(self) -> TriangleMesh:
        return self.shape.mesh

    def occupancy(self, part: Part, points: np.ndarray) -> np.ndarray:
        """Exact occupancy of C, F = C·B or R = C·(1-B) as uint8."""
        o_c = self.solid.contains(points)
        if part == "C":
            return o_c.astype(np.uint8)
        o_b = self.break_set.contains(points)
        if part == "F":
            return (o_c & o_b).astype(np.uint8)
        return (o_c & ~o_b).astype(np.uint8)

    def surface_points(self, part: Part, n: int, rng: np.random.Generator) -> np.ndarray:
        if part == "C":
            return self.solid.sample_surface(n, rng)
        return sample_part_surface(self.solid, self.break_set, part, n, rng)

    def part_mesh(self, part: Part, resolution: int = 128) -> TriangleMesh:
        """Iso-surface of the exact part indicator (for export and inspection)."""
        if part == "C":
            return self.mesh_c
        grid = VoxelGrid.from_function(lambda p: self.occupancy(part, p), resolution)
        return marching_cubes(grid, 0.5)
