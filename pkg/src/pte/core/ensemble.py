"""Exponentially weighted (proleptic) temporal ensembling over a chunk history.

With offset ``f = 0`` the ensemble averages every retained prediction made for
the current step. With ``f > 0`` it averages the predictions made for step
``t + f`` instead, so the commanded target runs ``f`` steps ahead of the
trajectory the predictor was imitating. The column for ``t + f`` is shorter
by ``f`` entries because the oldest chunks never reached that far.
"""
from __future__ import annotations

import math

import numpy as np

from pte.core.chunks import ActionChunk, ChunkBuffer, EnsembleConfig
from pte.errors import EmptyColumnError, InvalidArgument


def _raw_weights(m: float, n: int) -> list[float]:
    return [math.exp(-m * i) for i in range(n)]


def weight_vector(m: float, n: int) -> np.ndarray:
    """Normalized weights ``exp(-m*i) / sum_j exp(-m*j)`` for i = 0..n-1.

    Index 0 is the newest inference, so a larger ``m`` favours recent chunks.
    """
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise InvalidArgument(f"n must be a positive integer, got {n!r}")
    if not (isinstance(m, (int, float)) and math.isfinite(m) and m >= 0):
        raise InvalidArgument(f"m must be finite and >= 0, got {m!r}")
    w = np.array(_raw_weights(float(m), int(n)))
    return w / math.fsum(w)


def push_chunk(buffer: ChunkBuffer, chunk: ActionChunk) -> ChunkBuffer:
    return buffer.push(chunk)


def _check_query(buffer: ChunkBuffer, t: int, f: int) -> None:
    if int(f) != f or not 0 <= f <= buffer.chunk_len - 1:
        raise InvalidArgument(f"f must be in [0, {buffer.chunk_len - 1}], got {f!r}")
    newest = buffer.newest_time
    if newest is not None and t < newest:
        raise InvalidArgument(f"query time {t} precedes newest inference time {newest}")


def proleptic_column(buffer: ChunkBuffer, t: int, f: int) -> list[np.ndarray]:
    _check_query(buffer, t, f)
    _, acts = buffer.column(t, f)
    if not acts:
        raise EmptyColumnError(f"no retained chunk covers step {t + f}")
    return acts


def weighted_average(column: list[np.ndarray], m: float) -> np.ndarray:
    """``sum_i w_i * column[i] / sum_i w_i``, accumulated newest first."""
    if not column:
        raise EmptyColumnError("empty column")
    weights = _raw_weights(float(m), len(column))
    num = np.zeros_like(column[0], dtype=np.float64)
    den = 0.0
    for w, a in zip(weights, column):
        num = num + w * a
        den += w
    return num / den


def ensemble_action(buffer: ChunkBuffer, t: int, config: EnsembleConfig) -> np.ndarray:
    if config.chunk_len != buffer.chunk_len:
        raise InvalidArgument(f"config chunk_len {config.chunk_len} != buffer chunk_len {buffer.chunk_len}")
    return weighted_average(proleptic_column(buffer, t, config.f), config.m)
