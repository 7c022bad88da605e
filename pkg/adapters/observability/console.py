"""
Rich console sink: human-readable progress on standard error.
"""
from __future__ import annotations

import threading

from rich.console import Console
from rich.text import Text

from core.observability.events import Event, EventLevel

_ORDER = {EventLevel.DEBUG: 0, EventLevel.INFO: 1, EventLevel.WARNING: 2, EventLevel.ERROR: 3}
_STYLE = {EventLevel.DEBUG: "dim", EventLevel.INFO: "cyan", EventLevel.WARNING: "yellow", EventLevel.ERROR: "bold red"}

# Per-attempt fracture events are too chatty for the console; they still reach the JSONL sink.
QUIET_EVENTS = {"fracture_bisected", "retry"}


class ConsoleSink:
    def __init__(self, min_level: EventLevel = EventLevel.INFO, console: Console | None = None) -> None:
        self.min_level = min_level
        self.console = console or Console(stderr=True)
        self._lock = threading.Lock()

    def send(self, event: Event) -> None:
        if _ORDER[event.level] < _ORDER[self.min_level]:
            return
        if event.event_type in QUIET_EVENTS and self.min_level is not EventLevel.DEBUG:
            return
        fields = " ".join(f"{k}={_fmt(v)}" for k, v in event.payload.items())
        style = _STYLE[event.level]
        with self._lock:
            self.console.print(Text.assemble((event.runtime, style), f" {event.event_type} {fields}"))


def _fmt(value: object) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)
