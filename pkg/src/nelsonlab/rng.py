"""Counter-based random streams.

Every stream is a Philox generator keyed by ``(seed, stream id)``; the stream
id packs a path index with a purpose code, so each path direction draws from
its own reproducible stream regardless of how paths are split over workers.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

PURPOSE = {"init": 0, "forward": 1, "backward": 2, "sde": 3, "misc": 4}
_MASK = (1 << 64) - 1


def stream(seed: int, index: int, purpose: str) -> np.random.Generator:
    key = np.array([int(seed) & _MASK, ((int(index) << 3) | PURPOSE[purpose]) & _MASK], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def uniforms_open(seed: int, purpose: str, indices, n: int) -> np.ndarray:
    """Uniforms on ``(0, 1]``, one row of length ``n`` per index."""
    out = np.empty((len(indices), n))
    for r, i in enumerate(indices):
        out[r] = 1.0 - stream(seed, i, purpose).random(n)
    return out


def normals(seed: int, purpose: str, indices, shape) -> np.ndarray:
    shape = tuple(np.atleast_1d(shape))
    out = np.empty((len(indices),) + shape)
    for r, i in enumerate(indices):
        out[r] = stream(seed, i, purpose).standard_normal(shape)
    return out


def chunks(M: int, chunk: int):
    return [np.arange(a, min(a + chunk, M)) for a in range(0, M, chunk)]


def parallel_map(fn, items, workers: int = 1):
    """Ordered map; results are concatenated in input order so output is scheduling-free."""
    if workers <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))
