"""Append-only JSONL event log for training and evaluation runs."""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

from .clock import Clock, FrozenClock


def ensure_dir(path: str) -> None:
    """Ensure that a directory exists."""
    os.makedirs(path, exist_ok=True)


def write_jsonl(path: str, record: Dict[str, Any]) -> None:
    """Append one record to a JSONL file, creating parent directories."""
    parent = os.path.dirname(path)
    if parent:
        ensure_dir(parent)
    with open(path, "a", encoding="utf-8") as f:
        f.write(json.dumps(record, ensure_ascii=False, sort_keys=True, default=str) + "\n")


@dataclass
class EventLog:
    """Append-only structured event log.

    Events are always kept in memory; when ``path`` is set they are also
    appended to disk as they are emitted. Timestamps come from ``clock``,
    which is frozen unless the caller asks otherwise.
    """

    path: Optional[Path] = None
    clock: Clock = field(default_factory=FrozenClock)
    events: List[Dict[str, Any]] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self) -> None:
        if self.path is not None:
            self.path = Path(self.path)
            self.path.parent.mkdir(parents=True, exist_ok=True)

    def emit(self, event_type: str, **data: Any) -> None:
        """Emit a structured event.

        Args:
            event_type: Type of event (e.g., "epoch_end", "repeat_complete").
            **data: Additional event data.
        """
        event = {
            "timestamp": self.clock.now_utc().isoformat(),
            "type": event_type,
            **data,
        }
        with self._lock:
            self.events.append(event)
            if self.path is not None:
                write_jsonl(str(self.path), event)

    def get_events(self, event_type: Optional[str] = None) -> List[Dict[str, Any]]:
        """Get events, optionally filtered by type."""
        with self._lock:
            if event_type is None:
                return self.events.copy()
            return [e for e in self.events if e.get("type") == event_type]


def null_event_log() -> EventLog:
    """An in-memory log for library calls made without one."""
    return EventLog()
