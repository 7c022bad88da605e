"""
Analytic break sets and removed-volume-controlled fracturing.

A break set B splits space into a kept side (o_B = 1, the fractured part F
lies there) and a removed side (the restoration part R). ``fracture`` picks a
random cut primitive and bisects its offset until the Monte Carlo removed
fraction vol(R)/vol(C) lands inside the requested band.
"""
from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import List, Literal, Tuple

import numpy as np

from core.observability.emitter import emit_runtime_event
from core.runtime.errors import FractureError, GeometryError, ParameterError
from core.schemas.contracts import BreakDescriptor
from geometry.sampling import VolumeEstimate, ratio_estimate
from geometry.solids import Solid

MAX_BISECTION_STEPS = 64
# Bisection targets the inner part of the band; a re-estimated fraction must
# still land inside it.
BAND_SHRINK = 0.25


def random_unit_vector(rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q.T


def _tangents(normal: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    helper = np.array([1.0, 0.0, 0.0]) if abs(normal[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(normal, helper)
    u /= np.linalg.norm(u)
    return u, np.cross(normal, u)


class BreakSet(ABC):
    kind: str

    @abstractmethod
    def contains(self, points: np.ndarray) -> np.ndarray:
        """o_B as booleans: True on the kept side."""

    @abstractmethod
    def descriptor(self) -> BreakDescriptor: ...

    @abstractmethod
    def sample_cut(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Area-uniform points on the cut surface (not clipped to any shape)."""

    @abstractmethod
    def cut_area(self) -> float:
        """Area of the region ``sample_cut`` draws from."""

    @staticmethod
    def from_descriptor(desc: BreakDescriptor) -> "BreakSet":
        if desc.kind == "plane":
            return PlaneBreak(np.asarray(desc.normal), float(desc.offset))
        return EllipsoidBreak(np.asarray(desc.center), np.asarray(desc.axes), np.asarray(desc.rotation))


class PlaneBreak(BreakSet):
    kind = "plane"

    def __init__(self, normal: np.ndarray, offset: float) -> None:
        normal = np.asarray(normal, dtype=np.float64)
        length = np.linalg.norm(normal)
        if not length > 0:
            raise ParameterError("plane normal must be non-zero")
        self.normal = normal / length
        self.offset = float(offset)

    def contains(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64).reshape(-1, 3) @ self.normal <= self.offset

    def descriptor(self) -> BreakDescriptor:
        return BreakDescriptor(kind="plane", normal=self.normal.tolist(), offset=self.offset)

    def sample_cut(self, n: int, rng: np.random.Generator) -> np.ndarray:
        centre = np.full(3, 0.5)
        foot = centre + (self.offset - centre @ self.normal) * self.normal
        u, w = _tangents(self.normal)
        half = np.sqrt(3.0) / 2.0
        st = rng.uniform(-half, half, size=(n, 2))
        return foot + st[:, :1] * u + st[:, 1:] * w

    def cut_area(self) -> float:
        return 3.0


class EllipsoidBreak(BreakSet):
    """Ellipsoidal patch; the removed part is the inside of the ellipsoid."""

    kind = "ellipsoid"

    def __init__(self, center: np.ndarray, axes: np.ndarray, rotation: np.ndarray) -> None:
        self.center = np.asarray(center, dtype=np.float64).reshape(3)
        self.axes = np.asarray(axes, dtype=np.float64).reshape(3)
        self.rotation = np.asarray(rotation, dtype=np.float64).reshape(3, 3)
        if np.any(self.axes <= 0):
            raise ParameterError("ellipsoid axes must be positive")
        self._area: float | None = None

    def _quadric(self, points: np.ndarray) -> np.ndarray:
        local = (np.asarray(points, dtype=np.float64).reshape(-1, 3) - self.center) @ self.rotation.T
        return np.sum((local / self.axes) ** 2, axis=1)

    def contains(self, points: np.ndarray) -> np.ndarray:
        return self._quadric(points) > 1.0

    def descriptor(self) -> BreakDescriptor:
        return BreakDescriptor(
            kind="ellipsoid",
            center=self.center.tolist(),
            axes=self.axes.tolist(),
            rotation=self.rotation.tolist(),
        )

    def _sphere(self, n: int, rng: np.random.Generator) -> np.ndarray:
        u = rng.normal(size=(n, 3))
        return u / np.linalg.norm(u, axis=1, keepdims=True)

    def sample_cut(self, n: int, rng: np.random.Generator) -> np.ndarray:
        # sphere -> ellipsoid stretches area by a factor proportional to |u / axes|
        w_max = 1.0 / self.axes.min()
        kept: List[np.ndarray] = []
        have = 0
        while have < n:
            u = self._sphere(2 * (n - have) + 16, rng)
            weight = np.linalg.norm(u / self.axes, axis=1)
            u = u[rng.random(len(u)) * w_max < weight]
            kept.append(u)
            have += len(u)
        u = np.concatenate(kept)[:n]
        return self.center + (u * self.axes) @ self.rotation

    def cut_area(self) -> float:
        if self._area is None:
            u = self._sphere(200_000, np.random.default_rng(0))
            self._area = float(4.0 * np.pi * np.prod(self.axes) * np.mean(np.linalg.norm(u / self.axes, axis=1)))
        return self._area


@dataclass
class FractureResult:
    break_set: BreakSet
    estimate: VolumeEstimate
    steps: int


def _bisect(fraction, t_keep: float, t_remove: float, band: Tuple[float, float]) -> Tuple[float, float, int]:
    """Bisect between ``t_keep`` (large removed fraction) and ``t_remove`` (none removed).

    Returns the offset, its fraction and the number of bisection steps.
    """
    lo, hi = band
    shrink = BAND_SHRINK * (hi - lo)
    inner_lo, inner_hi = lo + shrink, hi - shrink
    f_start = fraction(t_keep)
    if f_start < lo:
        raise FractureError(f"cut removes at most {f_start:.4f} of the volume, band starts at {lo}")
    if inner_lo <= f_start <= inner_hi:
        return t_keep, f_start, 0
    a, b = t_keep, t_remove
    f = f_start
    t = a
    for step in range(1, MAX_BISECTION_STEPS + 1):
        t = 0.5 * (a + b)
        f = fraction(t)
        if inner_lo <= f <= inner_hi:
            return t, f, step
        if f > inner_hi:
            a = t
        else:
            b = t
    if lo <= f <= hi:
        return t, f, MAX_BISECTION_STEPS
    raise FractureError(f"no offset reached band [{lo}, {hi}] within {MAX_BISECTION_STEPS} bisection steps (last {f:.4f})")


def fracture(
    solid: Solid,
    band: Tuple[float, float],
    rng: np.random.Generator,
    *,
    kind: Literal["plane", "ellipsoid"] = "plane",
    n_mc: int = 200_000,
) -> FractureResult:
    """One fracture attempt with a random cut orientation.

    Raises ``FractureError`` when the orientation cannot reach the band; the
    caller retries with a fresh generator.
    """
    lo, hi = band
    if not 0.0 < lo < hi < 1.0:
        raise ParameterError(f"band must satisfy 0 < lo < hi < 1, got {band}")
    x = rng.random((n_mc, 3))
    inside = x[solid.contains(x)]
    if len(inside) == 0:
        raise GeometryError("shape has no Monte Carlo volume")

    if kind == "plane":
        normal = random_unit_vector(rng)
        proj = inside @ normal
        order = np.sort(proj)

        def removed(t: float) -> float:
            return float(len(order) - np.searchsorted(order, t, side="right")) / len(order)

        t, _, steps = _bisect(removed, float(order[0]) - 1e-9, float(order[-1]), band)
        brk: BreakSet = PlaneBreak(normal, t)
    elif kind == "ellipsoid":
        direction = random_unit_vector(rng)
        extent = float(np.linalg.norm(inside.max(axis=0) - inside.min(axis=0)))
        axes = extent * rng.uniform(0.35, 0.7, size=3)
        rotation = random_rotation(rng)
        anchor = inside.mean(axis=0)

        def at(t: float) -> EllipsoidBreak:
            return EllipsoidBreak(anchor + t * direction, axes, rotation)

        def removed(t: float) -> float:
            return float(np.mean(~at(t).contains(inside)))

        t, _, steps = _bisect(removed, 0.0, extent + float(axes.max()), band)
        brk = at(t)
    else:
        raise ParameterError(f"unknown break kind '{kind}'")

    estimate = ratio_estimate(~brk.contains(inside), np.ones(len(inside), dtype=bool))
    emit_runtime_event(
        runtime="fracture",
        event_type="fracture_bisected",
        payload={"kind": kind, "steps": steps, "fraction": estimate.fraction},
    )
    return FractureResult(break_set=brk, estimate=estimate, steps=steps)


def sample_part_surface(
    solid: Solid,
    brk: BreakSet,
    part: Literal["F", "R"],
    n: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Area-uniform samples on the boundary of F = C ∩ B or R = C \\ B.

    The boundary is the complete surface on that side of the cut plus the cut
    face inside the complete shape.
    """
    if n < 1:
        raise ParameterError("part surface sampling needs n >= 1")
    keep_side = part == "F"
    area_c = solid.mesh().total_area()
    area_cut = brk.cut_area()
    share_c = area_c / (area_c + area_cut)
    kept: List[np.ndarray] = []
    have = 0
    for _ in range(256):
        batch = max(4 * n, 1024)
        n_c = int(rng.binomial(batch, share_c))
        shell = solid.sample_surface(max(n_c, 1), rng)[:n_c]
        shell = shell[brk.contains(shell) == keep_side]
        face = brk.sample_cut(batch - n_c, rng)
        face = face[solid.contains(face)]
        fresh = np.concatenate([shell, face])
        kept.append(fresh)
        have += len(fresh)
        if have >= n:
            pool = np.concatenate(kept)
            return pool[rng.permutation(len(pool))[:n]]
    raise GeometryError(f"part {part} has (almost) no surface")
