"""JSON Lines chunk logs: one ``{"v": int, "actions": [[...], ...]}`` object per line."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from pte.core.chunks import ActionChunk
from pte.errors import OrderingError, ParseError, PTEError


def chunk_to_record(chunk: ActionChunk) -> dict:
    return {"v": chunk.inference_time, "actions": chunk.actions.tolist()}


def write_chunk_log(chunks: Iterable[ActionChunk], path) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for c in chunks:
            fh.write(json.dumps(chunk_to_record(c), separators=(",", ":")) + "\n")
    return path


class ChunkLogCursor:
    """Sequential reader that validates ordering and shape as it goes."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh = self.path.open("r", encoding="utf-8")
        self.line_no = 0
        self.records = 0
        self.shape: tuple[int, int] | None = None
        self.last_v: int | None = None

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __iter__(self) -> Iterator[ActionChunk]:
        while (chunk := self.next_chunk()) is not None:
            yield chunk

    def _fail(self, msg, truncated=False):
        if truncated:
            last = self.records - 1
            msg = f"{msg}; truncated record after last complete record index {last}"
        raise ParseError(msg, line=self.line_no)

    def next_chunk(self) -> ActionChunk | None:
        while True:
            raw = self._fh.readline()
            if raw == "":
                return None
            self.line_no += 1
            if raw.strip():
                break
        truncated = not raw.endswith("\n")
        try:
            rec = json.loads(raw)
        except json.JSONDecodeError as exc:
            self._fail(f"invalid JSON ({exc.msg})", truncated)
        if not isinstance(rec, dict) or "v" not in rec or "actions" not in rec:
            self._fail("record must be an object with 'v' and 'actions'", truncated)
        v = rec["v"]
        if not isinstance(v, int) or isinstance(v, bool):
            self._fail(f"'v' must be an integer, got {v!r}")
        try:
            acts = np.array(rec["actions"], dtype=np.float64)
        except (TypeError, ValueError):
            self._fail("'actions' must be a rectangular list of numbers")
        if acts.ndim != 2 or acts.size == 0:
            self._fail(f"'actions' must be a non-empty L x dof array, got shape {acts.shape}")
        if self.shape is not None and acts.shape != self.shape:
            self._fail(f"shape drift: expected {self.shape[0]} x {self.shape[1]}, got {acts.shape[0]} x {acts.shape[1]}")
        if self.last_v is not None and v <= self.last_v:
            raise OrderingError(f"line {self.line_no}: inference time {v} does not follow {self.last_v}")
        try:
            chunk = ActionChunk(v, acts)
        except PTEError as exc:
            self._fail(str(exc))
        self.shape = acts.shape
        self.last_v = v
        self.records += 1
        return chunk


def open_chunk_log(path) -> ChunkLogCursor:
    return ChunkLogCursor(path)


def read_chunk_log(path) -> list[ActionChunk]:
    with open_chunk_log(path) as cur:
        return list(cur)
