"""
Lightweight event emitter to keep observability semantics centralized.
Actual sinks live under adapters/observability/.
"""
from __future__ import annotations

from typing import Iterable, List, Optional, Protocol

from core.observability.events import Event, EventLevel


class EventSink(Protocol):
    def send(self, event: Event) -> None: ...


class EventEmitter:
    def __init__(self, sinks: Optional[Iterable[EventSink]] = None):
        self.sinks: List[EventSink] = list(sinks) if sinks else []

    def emit(self, runtime: str, event_type: str, payload: dict, level: EventLevel = EventLevel.INFO) -> None:
        event = Event(runtime=runtime, event_type=event_type, payload=payload, level=level)
        for sink in self.sinks:
            try:
                sink.send(event)
            except Exception:  # noqa: BLE001
                # sinks are best-effort
                continue


_default_emitter = EventEmitter()


def set_global_sinks(sinks: Iterable[EventSink]) -> None:
    global _default_emitter
    _default_emitter = EventEmitter(sinks)


def get_global_sinks() -> List[EventSink]:
    return list(_default_emitter.sinks)


def emit_runtime_event(runtime: str, event_type: str, payload: dict, level: EventLevel = EventLevel.INFO) -> None:
    _default_emitter.emit(runtime=runtime, event_type=event_type, payload=payload, level=level)


def emit_warning(runtime: str, event_type: str, payload: dict) -> None:
    _default_emitter.emit(runtime=runtime, event_type=event_type, payload=payload, level=EventLevel.WARNING)
