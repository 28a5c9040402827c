"""Chunk data model: action chunks, the bounded chunk history, ensemble settings."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from pte.errors import InvalidArgument, OrderingError, ShapeError


def as_action(values, dof: int | None = None) -> np.ndarray:
    """Coerce to a finite float64 action vector, optionally checking its length."""
    arr = np.array(values, dtype=np.float64).reshape(-1)
    if dof is not None and arr.shape[0] != dof:
        raise ShapeError(f"expected action of length {dof}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgument("action contains non-finite entries")
    return arr


@dataclass(frozen=True, eq=False)
class ActionChunk:
    """Actions predicted at ``inference_time`` v; ``actions[j]`` targets step v + j."""

    inference_time: int
    actions: np.ndarray

    def __post_init__(self):
        if int(self.inference_time) != self.inference_time or self.inference_time < 0:
            raise InvalidArgument(f"inference_time must be a non-negative integer, got {self.inference_time!r}")
        arr = np.array(self.actions, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ShapeError(f"chunk actions must be a non-empty (L, dof) array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InvalidArgument("chunk contains non-finite actions")
        arr.setflags(write=False)
        object.__setattr__(self, "inference_time", int(self.inference_time))
        object.__setattr__(self, "actions", arr)

    @property
    def length(self) -> int:
        return self.actions.shape[0]

    @property
    def dof(self) -> int:
        return self.actions.shape[1]

    def covers(self, u: int) -> bool:
        return 0 <= u - self.inference_time < self.length

    def at(self, u: int) -> np.ndarray:
        """Predicted action for absolute step ``u``."""
        return self.actions[u - self.inference_time]

    def __eq__(self, other):
        if not isinstance(other, ActionChunk):
            return NotImplemented
        return self.inference_time == other.inference_time and np.array_equal(self.actions, other.actions)

    def __repr__(self):
        return f"ActionChunk(v={self.inference_time}, L={self.length}, dof={self.dof})"


@dataclass(frozen=True)
class EnsembleConfig:
    m: float = 0.05
    f: int = 0
    chunk_len: int = 24
    inference_period: int = 1
    control_hz: float = 20.0

    def __post_init__(self):
        if not (isinstance(self.m, (int, float)) and math.isfinite(self.m) and self.m >= 0):
            raise InvalidArgument(f"m must be finite and >= 0, got {self.m!r}")
        if int(self.chunk_len) != self.chunk_len or self.chunk_len < 1:
            raise InvalidArgument(f"chunk_len must be >= 1, got {self.chunk_len!r}")
        if int(self.f) != self.f or not 0 <= self.f <= self.chunk_len - 1:
            raise InvalidArgument(f"f must be an integer in [0, {self.chunk_len - 1}], got {self.f!r}")
        if int(self.inference_period) != self.inference_period or self.inference_period < 1:
            raise InvalidArgument(f"inference_period must be >= 1, got {self.inference_period!r}")
        if not (math.isfinite(self.control_hz) and self.control_hz > 0):
            raise InvalidArgument(f"control_hz must be > 0, got {self.control_hz!r}")

    @property
    def dt(self) -> float:
        return 1.0 / self.control_hz


class ChunkBuffer:
    """The most recent chunks, oldest first, bounded by ``capacity``.

    Only one writer and one reader are supported and they must be serialized
    by the caller.
    """

    def __init__(self, chunk_len: int, dof: int, capacity: int | None = None):
        if chunk_len < 1 or dof < 1:
            raise InvalidArgument("chunk_len and dof must be >= 1")
        self.chunk_len = int(chunk_len)
        self.dof = int(dof)
        self.capacity = int(capacity if capacity is not None else chunk_len)
        if self.capacity < 1:
            raise InvalidArgument("capacity must be >= 1")
        self._chunks: deque[ActionChunk] = deque()

    @classmethod
    def from_chunks(cls, chunks: Sequence[ActionChunk], capacity: int | None = None) -> "ChunkBuffer":
        if not chunks:
            raise InvalidArgument("need at least one chunk to infer the buffer shape")
        buf = cls(chunks[0].length, chunks[0].dof, capacity)
        for c in chunks:
            buf.push(c)
        return buf

    def __len__(self) -> int:
        return len(self._chunks)

    def __iter__(self) -> Iterator[ActionChunk]:
        return iter(self._chunks)

    @property
    def newest_time(self) -> int | None:
        return self._chunks[-1].inference_time if self._chunks else None

    @property
    def oldest_time(self) -> int | None:
        return self._chunks[0].inference_time if self._chunks else None

    def inference_times(self) -> list[int]:
        return [c.inference_time for c in self._chunks]

    def push(self, chunk: ActionChunk) -> "ChunkBuffer":
        if chunk.length != self.chunk_len or chunk.dof != self.dof:
            raise ShapeError(
                f"chunk shape ({chunk.length}, {chunk.dof}) does not match buffer ({self.chunk_len}, {self.dof})"
            )
        newest = self.newest_time
        if newest is not None and chunk.inference_time <= newest:
            raise OrderingError(
                f"chunk inference_time {chunk.inference_time} is not after newest retained {newest}"
            )
        self._chunks.append(chunk)
        while len(self._chunks) > self.capacity:
            self._chunks.popleft()
        return self

    def column(self, t: int, f: int) -> tuple[list[int], list[np.ndarray]]:
        """Inference times and actions targeting step t + f, newest inference first."""
        u = t + f
        times, acts = [], []
        for chunk in reversed(self._chunks):
            offset = u - chunk.inference_time
            if offset < 0:
                continue
            if offset >= self.chunk_len:
                break
            times.append(chunk.inference_time)
            acts.append(chunk.actions[offset])
        return times, acts
