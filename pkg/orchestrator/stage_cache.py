"""
Stage cache: remembers which inputs each completed stage ran on.

Layout: ``<root>/.stages/<stage>/<key>.json`` holding the input fingerprint,
the declared outputs and the stage log. A stage whose fingerprint is
unchanged and whose outputs still exist is skipped.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from core.observability.emitter import emit_runtime_event, emit_warning


class StageRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    stage: str
    key: str
    fingerprint: str
    outputs: list[str] = Field(default_factory=list)
    log_output: str = ""


def hash_file(path: Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _files(paths: Iterable[Path]) -> list[tuple[str, Path]]:
    """(label, file) pairs; labels are relative so a moved work directory keeps its cache."""
    out = []
    for path in paths:
        path = Path(path)
        if path.is_dir():
            for p in sorted(path.rglob("*")):
                if p.is_file() and ".stages" not in p.parts:
                    out.append((f"{path.name}/{p.relative_to(path).as_posix()}", p))
        elif path.exists():
            out.append((path.name, path))
    return out


def fingerprint(settings: Any, inputs: Sequence[Path] = ()) -> str:
    """sha256 over canonical JSON of ``settings`` and the bytes of every input file."""
    digest = hashlib.sha256()
    digest.update(json.dumps(settings, sort_keys=True, default=str).encode())
    for label, path in _files(inputs):
        digest.update(label.encode())
        digest.update(hash_file(path).encode())
    return digest.hexdigest()


class StageCache:
    def __init__(self, root: Path) -> None:
        self.root = Path(root) / ".stages"

    def _path(self, stage: str, key: str) -> Path:
        return self.root / stage / f"{key}.json"

    def lookup(self, stage: str, key: str) -> Optional[StageRecord]:
        path = self._path(stage, key)
        if not path.exists():
            return None
        try:
            return StageRecord.model_validate_json(path.read_text(encoding="utf-8"))
        except ValidationError:
            # unreadable record: the stage simply runs again
            emit_warning(runtime="pipeline", event_type="stage_record_invalid", payload={"stage": stage, "key": key})
            return None

    def is_fresh(self, stage: str, key: str, stamp: str) -> bool:
        record = self.lookup(stage, key)
        if record is None or record.fingerprint != stamp:
            return False
        if not all(Path(p).exists() for p in record.outputs):
            return False
        emit_runtime_event(runtime="pipeline", event_type="stage_skipped", payload={"stage": stage, "key": key})
        return True

    def record(self, stage: str, key: str, stamp: str, outputs: Iterable[Path], log_output: str = "") -> Path:
        path = self._path(stage, key)
        path.parent.mkdir(parents=True, exist_ok=True)
        record = StageRecord(stage=stage, key=key, fingerprint=stamp, outputs=[str(p) for p in outputs], log_output=log_output)
        path.write_text(record.model_dump_json(indent=2) + "\n", encoding="utf-8")
        return path

    def invalidate(self, stage: str, key: str) -> None:
        path = self._path(stage, key)
        if path.exists():
            path.unlink()
