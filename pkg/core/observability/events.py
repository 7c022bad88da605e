"""
Structured observability event definitions.
Pipeline stages emit these events; sinks/adapters consume them.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Dict


class EventLevel(str, Enum):
    DEBUG = "debug"
    INFO = "info"
    WARNING = "warning"
    ERROR = "error"


@dataclass
class Event:
    runtime: str
    event_type: str
    payload: Dict[str, Any]
    level: EventLevel = EventLevel.INFO
    timestamp: datetime = field(default_factory=lambda: datetime.now(timezone.utc))
