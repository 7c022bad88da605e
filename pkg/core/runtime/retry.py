"""
Bounded retries for stochastic generation steps.

Fracturing draws a random cut orientation; when no offset along it reaches
the requested band the caller retries with a fresh orientation.
"""
from __future__ import annotations

import os
from typing import Callable, TypeVar

from core.observability.emitter import emit_runtime_event
from core.runtime.errors import FractureError, ParameterError

MAX_FRACTURE_RETRIES = int(os.getenv("MENDKIT_FRACTURE_RETRIES", "20"))

T = TypeVar("T")


class RetriesExhausted(FractureError):
    """Every attempt failed; carries the last underlying error."""

    def __init__(self, attempts: int, last: Exception) -> None:
        super().__init__(f"gave up after {attempts} attempts: {last}")
        self.attempts = attempts
        self.last = last


def retry_with_fresh_draws(
    fn: Callable[[int], T],
    attempts: int = MAX_FRACTURE_RETRIES,
    *,
    retry_on: tuple[type[Exception], ...] = (FractureError,),
    runtime: str = "retry",
) -> T:
    """Call ``fn(attempt)`` until it succeeds or ``attempts`` are used up."""
    if attempts < 1:
        raise ParameterError("attempts must be >= 1")
    last: Exception | None = None
    for attempt in range(attempts):
        try:
            return fn(attempt)
        except retry_on as exc:
            last = exc
            emit_runtime_event(
                runtime=runtime,
                event_type="retry",
                payload={"attempt": attempt, "error": str(exc)},
            )
    assert last is not None
    raise RetriesExhausted(attempts, last)
