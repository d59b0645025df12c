"""Pure-numpy KNN kernel, the fallback when the compiled extension is absent.

Chunked over queries to bound the pairwise-distance workspace. Squared
distances are accumulated in float64 with the same x,y,z order as the
compiled kernel, and ordering is by (distance, index), so both kernels return
identical results.
"""
from __future__ import annotations

import numpy as np

_CHUNK = 512


def knn(pos: np.ndarray, k: int):
    """Return (ids [N,k] int64, distances [N,k] float64), self included."""
    pos = np.ascontiguousarray(pos, dtype=np.float64)
    n = pos.shape[0]
    ids = np.empty((n, k), dtype=np.int64)
    dist = np.empty((n, k), dtype=np.float64)
    for start in range(0, n, _CHUNK):
        stop = min(start + _CHUNK, n)
        delta = pos[start:stop, None, :] - pos[None, :, :]
        d2 = (delta * delta).sum(axis=-1)
        # stable sort on distance keeps ascending point index on ties
        order = np.argsort(d2, axis=1, kind="stable")[:, :k]
        ids[start:stop] = order
        dist[start:stop] = np.sqrt(np.take_along_axis(d2, order, axis=1))
    return ids, dist
