"""Append-only JSONL result files."""

from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Any, Iterator

from mmorf.errors import ParseError


def dumps(record: dict[str, Any]) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


class JsonlWriter:
    """Single writer shared by worker threads; each record is one flushed line."""

    def __init__(self, path: str | Path, append: bool = False):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = self.path.open("a" if append else "w", encoding="utf-8")
        self._lock = threading.Lock()

    def write(self, record: dict[str, Any]) -> None:
        line = dumps(record) + "\n"
        with self._lock:
            self._fh.write(line)
            self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "JsonlWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def iter_jsonl(path: str | Path) -> Iterator[dict[str, Any]]:
    with Path(path).open(encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{n}: {exc.msg}") from exc
            if not isinstance(rec, dict):
                raise ParseError(f"{path}:{n}: expected a JSON object")
            yield rec


def read_jsonl(path: str | Path) -> list[dict[str, Any]]:
    return list(iter_jsonl(path))


def without_timing(record: dict[str, Any]) -> dict[str, Any]:
    """Copy with wall-clock fields dropped, for run-to-run comparison."""
    return {k: v for k, v in record.items() if k != "timing"}
