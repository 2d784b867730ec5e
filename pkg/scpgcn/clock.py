import hashlib
import json
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Any, Dict, Optional, Protocol

EPOCH_UTC = datetime(1970, 1, 1, tzinfo=timezone.utc)


class Clock(Protocol):
    def now_utc(self) -> datetime: ...


@dataclass(frozen=True)
class FrozenClock:
    start_time_utc: datetime = EPOCH_UTC

    def now_utc(self) -> datetime:
        return self.start_time_utc


class SystemClock:
    def now_utc(self) -> datetime:
        return datetime.now(timezone.utc)


def make_clock(time_mode: str = "frozen", started_at_utc: Optional[str] = None) -> Clock:
    """Build the clock used for event timestamps.

    Frozen time keeps event logs byte-identical between identical runs.
    """
    if time_mode == "live":
        return SystemClock()
    if time_mode != "frozen":
        raise ValueError(f"unknown time mode: {time_mode}")
    start = parse_utc_iso(started_at_utc or "") or EPOCH_UTC
    return FrozenClock(start_time_utc=start)


def _stable_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, default=str)


def make_run_id(
    *,
    clock: Clock,
    seed_material: Dict[str, Any],
) -> str:
    dt = clock.now_utc()
    ts = dt.strftime("%Y%m%d_%H%M%S")
    h = hashlib.sha256(_stable_json(seed_material).encode("utf-8", errors="ignore")).hexdigest()[:8]
    return f"run_{ts}_{h}"


def derive_seed(master: int, *labels: Any) -> int:
    """Derive an independent 32-bit seed from a master seed and a label path.

    ``derive_seed(7, "epoch", 3)`` is stable across processes and platforms.
    """
    material = _stable_json([int(master), *labels])
    return int(hashlib.sha256(material.encode("utf-8")).hexdigest()[:8], 16)


def parse_utc_iso(s: str) -> Optional[datetime]:
    if not s:
        return None
    try:
        dt = datetime.fromisoformat(s)
    except Exception:
        return None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)
