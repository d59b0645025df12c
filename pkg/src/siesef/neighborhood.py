"""Point clouds, K-nearest-neighbor search, and the sampling hierarchy.

``knn_search`` runs on the compiled kernel when the extension built, and on
the pure-numpy kernel otherwise; ``knn_bruteforce`` is the independent
all-pairs sort oracle used by the equivalence tests. The centroid is always
its own 0-th neighbor (distance 0), ties broken by ascending point index.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import NumericError, ShapeError
from .tensor import Tensor

try:  # compiled hot kernel, optional
    from . import _neighbors_c as _kernel
    HAVE_COMPILED_KERNEL = True
except ImportError:  # pragma: no cover - depends on build environment
    from . import _neighbors_py as _kernel
    HAVE_COMPILED_KERNEL = False

from . import _neighbors_py


@dataclass
class PointCloud:
    """N points with XYZ positions in meters plus optional labels/intensity."""

    positions: np.ndarray  # [N, 3] float32
    labels: np.ndarray | None = None  # [N] int
    intensity: np.ndarray | None = None  # [N] float32

    def __post_init__(self):
        pos = np.ascontiguousarray(self.positions, dtype=np.float32)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ShapeError(f"positions must be [N, 3], got {pos.shape}")
        if pos.shape[0] < 1:
            raise ShapeError("point cloud must contain at least one point")
        if not np.all(np.isfinite(pos)):
            raise NumericError("point cloud positions contain non-finite values")
        self.positions = pos
        if self.labels is not None:
            labels = np.ascontiguousarray(self.labels, dtype=np.int64)
            if labels.shape != (pos.shape[0],):
                raise ShapeError(f"labels must be [N], got {labels.shape} for N={pos.shape[0]}")
            self.labels = labels
        if self.intensity is not None:
            inten = np.ascontiguousarray(self.intensity, dtype=np.float32)
            if inten.shape != (pos.shape[0],):
                raise ShapeError(f"intensity must be [N], got {inten.shape}")
            self.intensity = inten

    def __len__(self):
        return self.positions.shape[0]

    def recentered(self) -> "PointCloud":
        """Subtract the centroid (in float64) to keep coordinates small."""
        center = self.positions.astype(np.float64).mean(axis=0)
        pos = (self.positions.astype(np.float64) - center).astype(np.float32)
        return PointCloud(pos, self.labels, self.intensity)

    def select(self, ids: np.ndarray) -> "PointCloud":
        return PointCloud(
            self.positions[ids],
            None if self.labels is None else self.labels[ids],
            None if self.intensity is None else self.intensity[ids],
        )


@dataclass
class NeighborhoodIndex:
    """Per-point K neighbor ids plus cached Euclidean distances (sorted)."""

    neighbor_ids: np.ndarray  # [N, K] int64
    distances: np.ndarray  # [N, K] float32, non-decreasing along K

    @property
    def k(self) -> int:
        return self.neighbor_ids.shape[1]


@dataclass
class SamplingMap:
    """Downsampling record: which fine points were kept, and for every fine
    point the row (position in kept order) of its nearest kept point."""

    kept_ids: np.ndarray  # [M] int64, indices into the finer cloud
    upsample_ids: np.ndarray  # [N] int64, values in [0, M)


def _validate_knn_args(cloud: PointCloud, k: int):
    n = len(cloud)
    if not 1 <= k <= n:
        raise ShapeError(f"k must be in [1, {n}], got {k}")


def knn_search(cloud: PointCloud, k: int) -> NeighborhoodIndex:
    """K nearest neighbors per point, self included, ties by ascending index."""
    _validate_knn_args(cloud, k)
    ids, dist = _kernel.knn(cloud.positions.astype(np.float64), k)
    return NeighborhoodIndex(np.asarray(ids), np.asarray(dist, dtype=np.float32))


def knn_bruteforce(cloud: PointCloud, k: int) -> NeighborhoodIndex:
    """Exhaustive O(N^2) all-pairs sort; the correctness oracle for knn_search."""
    _validate_knn_args(cloud, k)
    pos = cloud.positions.astype(np.float64)
    delta = pos[:, None, :] - pos[None, :, :]
    d2 = (delta * delta).sum(axis=-1)
    n = pos.shape[0]
    col_index = np.broadcast_to(np.arange(n), (n, n))
    order = np.lexsort((col_index, d2), axis=1)[:, :k]
    dist = np.sqrt(np.take_along_axis(d2, order, axis=1))
    return NeighborhoodIndex(order.astype(np.int64), dist.astype(np.float32))


def knn_fallback(cloud: PointCloud, k: int) -> NeighborhoodIndex:
    """The pure-numpy kernel regardless of whether the extension built."""
    _validate_knn_args(cloud, k)
    ids, dist = _neighbors_py.knn(cloud.positions.astype(np.float64), k)
    return NeighborhoodIndex(ids, dist.astype(np.float32))


def random_downsample(cloud: PointCloud, ratio: float, seed: int) -> tuple[PointCloud, SamplingMap]:
    """Keep max(1, floor(N*ratio)) points uniformly without replacement."""
    if not 0 < ratio <= 1:
        raise ValueError(f"ratio must be in (0, 1], got {ratio}")
    n = len(cloud)
    m = max(1, int(n * ratio))
    rng = np.random.default_rng(seed)
    kept = rng.choice(n, size=m, replace=False).astype(np.int64)
    coarse = cloud.select(kept)
    # nearest kept point for every fine point, in float64 like the KNN kernels
    fine = cloud.positions.astype(np.float64)
    kept_pos = coarse.positions.astype(np.float64)
    upsample = np.empty(n, dtype=np.int64)
    chunk = 2048
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        delta = fine[start:stop, None, :] - kept_pos[None, :, :]
        d2 = (delta * delta).sum(axis=-1)
        upsample[start:stop] = d2.argmin(axis=1)
    return coarse, SamplingMap(kept, upsample)


def upsample_features(coarse_features, smap: SamplingMap):
    """Nearest-neighbor feature copy: out[i] = coarse[upsample_ids[i]].

    Accepts either a Tensor (differentiable gather) or a plain array.
    """
    ids = smap.upsample_ids
    if isinstance(coarse_features, Tensor):
        if ids.max(initial=-1) >= coarse_features.shape[0]:
            raise ShapeError("upsample_ids reference rows beyond the coarse feature set")
        return T.gather_rows(coarse_features, ids)
    arr = np.asarray(coarse_features)
    if ids.max(initial=-1) >= arr.shape[0]:
        raise ShapeError("upsample_ids reference rows beyond the coarse feature set")
    return arr[ids]
