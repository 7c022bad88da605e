"""
Procedural shape families standing in for a curated mesh collection.

Every family draws jittered parameters around a prototype, builds a solid
with an exact occupancy oracle and normalizes it into the unit cube. The
parameters are recorded so a dataset reader can rebuild the same solid.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

import numpy as np

from core.runtime.errors import ParameterError
from core.schemas.config import DataConfig, ShapeClass
from core.schemas.contracts import ShapeParams
from geometry.mesh import TriangleMesh
from geometry.obj_io import read_obj
from geometry.solids import AffineSolid, BoxSolid, LatheSolid, MeshSolid, Solid, UnionSolid


@dataclass(frozen=True)
class ClassSpec:
    name: ShapeClass
    jitter: float = 1.0
    segments: int = 32
    margin: float = 0.05
    obj_path: Optional[str] = None

    def __post_init__(self) -> None:
        if not isinstance(self.name, ShapeClass):
            try:
                object.__setattr__(self, "name", ShapeClass(self.name))
            except ValueError as exc:
                raise ParameterError(f"unknown shape class '{self.name}'") from exc
        if not 0.0 <= self.jitter <= 1.0:
            raise ParameterError(f"jitter must lie in [0, 1], got {self.jitter}")
        if self.segments < 3:
            raise ParameterError("segments must be >= 3")
        if self.name is ShapeClass.OBJ and not self.obj_path:
            raise ParameterError("the 'obj' class needs an OBJ path")

    @classmethod
    def from_config(cls, data: DataConfig) -> "ClassSpec":
        return cls(name=data.class_name, jitter=data.jitter, segments=data.segments, margin=data.margin, obj_path=data.obj_path)


@dataclass
class ProceduralShape:
    params: ShapeParams
    solid: AffineSolid

    @property
    def mesh(self) -> TriangleMesh:
        return self.solid.mesh()


# Prototype values and relative jitter amplitude per family.
PROTOTYPES: Dict[ShapeClass, Dict[str, tuple[float, float]]] = {
    ShapeClass.BOXES: {"sx": (1.0, 0.4), "sy": (0.7, 0.4), "sz": (0.5, 0.4)},
    ShapeClass.BOTTLES: {
        "body_radius": (0.35, 0.2),
        "body_height": (0.6, 0.25),
        "bevel": (0.03, 0.3),
        "shoulder_height": (0.15, 0.3),
        "neck_radius": (0.12, 0.25),
        "neck_height": (0.25, 0.3),
    },
    ShapeClass.MUGS: {
        "radius": (0.4, 0.2),
        "height": (0.8, 0.25),
        "wall": (0.06, 0.2),
        "floor": (0.08, 0.2),
        "handle_reach": (0.22, 0.3),
        "handle_thickness": (0.08, 0.2),
        "handle_depth": (0.1, 0.2),
    },
    ShapeClass.OBJ: {},
}


def _box(values: Dict[str, float], segments: int) -> Solid:
    return BoxSolid((0.0, 0.0, 0.0), (values["sx"], values["sy"], values["sz"]))


def _bottle(values: Dict[str, float], segments: int) -> Solid:
    big = values["body_radius"]
    small = min(values["neck_radius"], 0.8 * big)
    bevel = min(values["bevel"], 0.5 * big)
    body = values["body_height"]
    shoulder = body + values["shoulder_height"]
    top = shoulder + values["neck_height"]
    profile = [(0.0, 0.0), (big - bevel, 0.0), (big, bevel), (big, body), (small, shoulder), (small, top), (0.0, top)]
    return LatheSolid(profile, (0.0, 0.0), segments)


def _mug(values: Dict[str, float], segments: int) -> Solid:
    outer = values["radius"]
    height = values["height"]
    wall = min(values["wall"], 0.4 * outer)
    floor = min(values["floor"], 0.4 * height)
    inner = outer - wall
    cup = LatheSolid([(0.0, 0.0), (outer, 0.0), (outer, height), (inner, height), (inner, floor), (0.0, floor)], (0.0, 0.0), segments)
    # C-shaped handle on +x made of three overlapping bars rooted inside the wall
    thick = values["handle_thickness"]
    half_depth = values["handle_depth"] / 2.0
    root = inner + wall / 2.0
    tip = outer + values["handle_reach"]
    z_lo, z_hi = 0.2 * height, 0.8 * height
    upper = BoxSolid((root, -half_depth, z_hi - thick), (tip, half_depth, z_hi))
    lower = BoxSolid((root, -half_depth, z_lo), (tip, half_depth, z_lo + thick))
    grip = BoxSolid((tip - thick, -half_depth, z_lo), (tip, half_depth, z_hi))
    return UnionSolid([cup, upper, lower, grip])


def _obj(values: Dict[str, float], segments: int, source: Optional[str] = None) -> Solid:
    return MeshSolid(read_obj(source))


BUILDERS: Dict[ShapeClass, Callable[..., Solid]] = {
    ShapeClass.BOXES: _box,
    ShapeClass.BOTTLES: _bottle,
    ShapeClass.MUGS: _mug,
}


def build_solid(params: ShapeParams) -> AffineSolid:
    """Rebuild the unit-cube solid described by ``params``."""
    if params.kind is ShapeClass.OBJ:
        if not params.source:
            raise ParameterError("OBJ shape parameters need a source path")
        raw = _obj(params.values, params.segments, params.source)
    else:
        raw = BUILDERS[params.kind](params.values, params.segments)
    return raw.normalized(params.margin)


def draw_params(spec: ClassSpec, rng: np.random.Generator) -> ShapeParams:
    values = {}
    for key, (base, amplitude) in PROTOTYPES[spec.name].items():
        factor = 1.0 + spec.jitter * amplitude * rng.uniform(-1.0, 1.0)
        values[key] = float(base * factor)
    return ShapeParams(kind=spec.name, values=values, segments=spec.segments, margin=spec.margin, source=spec.obj_path)


def gen_class(spec: ClassSpec, count: int, rng: np.random.Generator) -> List[ProceduralShape]:
    """``count`` watertight unit-cube shapes of one family."""
    if count < 1:
        raise ParameterError(f"count must be >= 1, got {count}")
    shapes = []
    for _ in range(count):
        params = draw_params(spec, rng)
        shapes.append(ProceduralShape(params=params, solid=build_solid(params)))
    return shapes
