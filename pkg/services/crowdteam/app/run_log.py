from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timezone
import json
import logging
import os
import time
from typing import Any

from .settings import Settings

logger = logging.getLogger("services.crowdteam.run")

_LEVELS = {
    "debug": logging.DEBUG,
    "info": logging.INFO,
    "warning": logging.WARNING,
    "error": logging.ERROR,
}


def _now_ms() -> int:
    return int(time.time() * 1000)


def _ts_iso(ms: int) -> str:
    return datetime.fromtimestamp(ms / 1000.0, tz=timezone.utc).isoformat(timespec="seconds")


def _jsonable(x: Any) -> Any:
    if x is None or isinstance(x, (str, int, float, bool)):
        return x
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    # numpy scalars/arrays
    tolist = getattr(x, "tolist", None)
    if callable(tolist):
        try:
            return _jsonable(tolist())
        except Exception:
            pass
    return str(x)


def append_run_event(path: str, event: dict[str, Any]) -> None:
    try:
        parent = os.path.dirname(os.path.abspath(path))
        os.makedirs(parent, exist_ok=True)
        ts = _now_ms()
        payload = {"ts": ts, "ts_iso": _ts_iso(ts), **(event or {})}
        with open(path, "a", encoding="utf-8") as f:
            f.write(json.dumps(_jsonable(payload), ensure_ascii=False) + "\n")
    except Exception:
        # Best-effort logging; never fail a run.
        return


@dataclass
class RunContext:
    logs: list[dict[str, Any]] = field(default_factory=list)
    log_file: str | None = None
    keep_in_memory: bool = True

    @classmethod
    def from_settings(cls, settings: Settings) -> RunContext:
        return cls(log_file=settings.run_log_path)

    def log(self, level: str, event: str, **fields: Any) -> None:
        item = {"level": str(level), "event": str(event), "fields": _jsonable(fields)}
        if self.keep_in_memory:
            self.logs.append(item)
        logger.log(_LEVELS.get(str(level).lower(), logging.INFO), "%s %s", event, json.dumps(item["fields"], sort_keys=True))
        if self.log_file:
            append_run_event(self.log_file, item)

    def events(self, name: str) -> list[dict[str, Any]]:
        return [e for e in self.logs if e["event"] == name]
