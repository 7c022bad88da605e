"""
Wavefront OBJ read/write (vertices and triangular faces only).
"""
from __future__ import annotations

from pathlib import Path
from typing import List

import numpy as np

from core.runtime.errors import GeometryError, MissingArtifactError
from geometry.mesh import TriangleMesh


def read_obj(path: Path) -> TriangleMesh:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(path, "OBJ file")
    vertices: List[List[float]] = []
    faces: List[List[int]] = []
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise GeometryError(f"{path}: not UTF-8 text ({exc.reason} at byte {exc.start})") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tag, *fields = line.split()
        if tag == "v":
            if len(fields) < 3:
                raise GeometryError(f"{path}:{lineno}: vertex needs 3 coordinates")
            try:
                vertices.append([float(f) for f in fields[:3]])
            except ValueError as exc:
                raise GeometryError(f"{path}:{lineno}: {exc}") from exc
        elif tag == "f":
            if len(fields) != 3:
                raise GeometryError(f"{path}:{lineno}: only triangular faces are supported, got {len(fields)} vertices")
            idx = []
            for f in fields:
                try:
                    i = int(f.split("/", 1)[0])
                except ValueError as exc:
                    raise GeometryError(f"{path}:{lineno}: {exc}") from exc
                # negative indices count back from the latest vertex
                idx.append(i - 1 if i > 0 else len(vertices) + i)
            faces.append(idx)
        # normals, texture coordinates, groups and materials are ignored
    if not faces:
        raise GeometryError(f"{path}: no faces")
    return TriangleMesh(np.array(vertices, dtype=np.float64), np.array(faces, dtype=np.int64))


def write_obj(mesh: TriangleMesh, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles]
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    return path
