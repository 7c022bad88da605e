"""
Append-only JSONL event log, one file per CLI run.

Each line carries ts, run_id, run_name, runtime, event_type, level and the
payload. NumPy scalars and arrays in payloads are written as plain JSON.
"""
from __future__ import annotations

import json
import re
import threading
from pathlib import Path
from typing import Any, Dict, Iterator, Optional

import numpy as np

from core.observability.events import Event

_UNSAFE = re.compile(r"[^A-Za-z0-9_-]")


def _jsonable(value: object) -> object:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return str(value)


def event_record(event: Event, run_id: str, run_name: str) -> Dict[str, Any]:
    return {
        "ts": event.timestamp.isoformat(),
        "run_id": run_id,
        "run_name": run_name,
        "runtime": event.runtime,
        "event_type": event.event_type,
        "level": event.level.value,
        "payload": event.payload,
    }


class JsonlFileSink:
    def __init__(self, run_name: str, run_id: str, base_dir: Optional[Path] = None) -> None:
        self.run_name = run_name or "run"
        self.run_id = run_id
        self.base_dir = Path(base_dir or "artifacts/observability")
        self.base_dir.mkdir(parents=True, exist_ok=True)
        self.path = self.base_dir / f"{_UNSAFE.sub('_', self.run_name)}_events.jsonl"
        self._lock = threading.Lock()
        self.path.touch(exist_ok=True)

    def send(self, event: Event) -> None:
        line = json.dumps(event_record(event, self.run_id, self.run_name), ensure_ascii=True, default=_jsonable)
        # pool threads share one sink
        with self._lock, self.path.open("a", encoding="utf-8") as handle:
            handle.write(line + "\n")


def read_events(path: Path, event_type: Optional[str] = None) -> Iterator[Dict[str, Any]]:
    """Parsed entries of an event log, optionally only one event type."""
    with Path(path).open(encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            entry = json.loads(line)
            if event_type is None or entry["event_type"] == event_type:
                yield entry
