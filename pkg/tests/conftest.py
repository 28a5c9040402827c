import numpy as np
import pytest

from pte.core import ActionChunk, ChunkBuffer


def synthetic_chunk(v, L=5):
    """Scalar chunk with entry j equal to 10*v + j."""
    return ActionChunk(v, np.array([[10.0 * v + j] for j in range(L)]))


@pytest.fixture
def synthetic_buffer():
    buf = ChunkBuffer(chunk_len=5, dof=1)
    for v in range(1, 6):
        buf.push(synthetic_chunk(v))
    return buf


def direct_ensemble(chunks, t, f, m):
    """Weighted average of the predictions for step t+f, written out in plain
    Python loops with no use of the library's column code."""
    rows = []
    for c in sorted(chunks, key=lambda c: -c.inference_time):
        j = t + f - c.inference_time
        if 0 <= j < len(c.actions):
            rows.append([float(x) for x in c.actions[j]])
    import math

    num = [0.0] * len(rows[0])
    den = 0.0
    for i, row in enumerate(rows):
        w = math.exp(-m * i)
        for k, x in enumerate(row):
            num[k] = num[k] + w * x
        den += w
    return [x / den for x in num]
