"""
Exception taxonomy for the restoration pipeline.

Every error carries the CLI exit code it maps to:
1 usage/parameter problems, 2 data/artifact problems, 3 numeric problems.
"""
from __future__ import annotations

from typing import Optional


class MendError(RuntimeError):
    """Base class for all pipeline errors."""

    exit_code: int = 1


# --- exit code 1 ---

class UsageError(MendError):
    """Invalid command line or configuration."""

    exit_code = 1


class ParameterError(UsageError):
    """An argument lies outside its documented domain."""


class DimensionError(UsageError):
    """Tensor or array shapes do not conform."""


# --- exit code 2 ---

class DataError(MendError):
    """Dataset, mesh or artifact content is unusable."""

    exit_code = 2


class MissingArtifactError(DataError):
    """A referenced file or directory does not exist."""

    def __init__(self, path: object, what: str = "artifact") -> None:
        super().__init__(f"Missing {what}: {path}")
        self.path = path


class DatasetFormatError(DataError):
    """Binary sample file or manifest is corrupt."""

    def __init__(self, message: str, *, path: object = None, offset: Optional[int] = None) -> None:
        where = []
        if path is not None:
            where.append(str(path))
        if offset is not None:
            where.append(f"offset {offset}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(f"{message}{suffix}")
        self.path = path
        self.offset = offset


class CheckpointFormatError(DataError):
    """Checkpoint files disagree with their layout table."""


class ResultFormatError(DataError):
    """A stored restoration result does not match its schema."""


class GeometryError(DataError):
    """Mesh is degenerate, not watertight, or otherwise unusable."""


class FractureError(DataError):
    """No cut offset reaches the requested removed-volume band."""


# --- exit code 3 ---

class NumericError(MendError):
    """NaN/Inf appeared in a forward or backward pass."""

    exit_code = 3


class OptimizationError(NumericError):
    """An optimizer received a non-finite gradient."""

    def __init__(self, param_name: str, message: str = "non-finite gradient") -> None:
        super().__init__(f"{message} for parameter '{param_name}'")
        self.param_name = param_name


class DegenerateInputError(NumericError):
    """The fractured input carries no occupied samples."""
