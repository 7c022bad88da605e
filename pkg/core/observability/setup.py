"""
Helper to wire observability sinks (JSONL file + rich console) for a CLI run.
"""
from __future__ import annotations

import os
import uuid
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from adapters.observability.console import ConsoleSink
from adapters.observability.jsonl import JsonlFileSink
from core.observability.emitter import set_global_sinks
from core.observability.events import EventLevel

ARTIFACTS_DIR = Path(os.getenv("MENDKIT_ARTIFACTS", "artifacts/observability"))


def default_run_name(prefix: str) -> str:
    return f"{prefix}_{datetime.now(timezone.utc).strftime('%Y%m%d-%H%M%S')}"


def configure_observability(
    run_name: Optional[str] = None,
    *,
    verbose: bool = False,
    base_dir: Optional[Path] = None,
) -> JsonlFileSink:
    """Install the JSONL and console sinks; returns the JSONL sink for callers that want its path."""
    name = run_name or default_run_name("run")
    jsonl_sink = JsonlFileSink(run_name=name, run_id=str(uuid.uuid4()), base_dir=base_dir or ARTIFACTS_DIR)
    console_sink = ConsoleSink(min_level=EventLevel.DEBUG if verbose else EventLevel.INFO)
    set_global_sinks([console_sink, jsonl_sink])
    return jsonl_sink
