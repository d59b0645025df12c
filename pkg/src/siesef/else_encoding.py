"""Enhanced local spatial encoding.

Every neighbor of a centroid gets a 10-dim geometric descriptor: its relative
position (3), an inverse-distance weight (1), and angular compensation (6) —
the L2-normalized sin/cos of the three axis-plane atan2 angles of the delta
vector. A shared MLP projects the descriptor to the encoding width.

Descriptors depend only on relative geometry, so the encoding is invariant to
global translations but deliberately sensitive to rotations.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ShapeError
from .neighborhood import NeighborhoodIndex, PointCloud
from .nn import MlpStack
from .tensor import Tensor

DESCRIPTOR_DIM = 10  # 3 relative + 1 inverse-distance + 6 angular


@dataclass
class SpatialDescriptor:
    relative_pos: np.ndarray  # [N, K, 3]
    inv_dist_weight: np.ndarray  # [N, K, 1]
    angle_comp: np.ndarray  # [N, K, 6]

    def concat(self) -> np.ndarray:
        return np.concatenate(
            [self.relative_pos, self.inv_dist_weight, self.angle_comp], axis=-1)


def _softmax_np(x: np.ndarray, axis: int) -> np.ndarray:
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def inverse_distance_weights(distances: np.ndarray) -> np.ndarray:
    """1 - softmax(distance) over the K axis: nearer neighbors weigh more."""
    d = np.asarray(distances)
    if d.ndim != 2 or d.shape[1] == 0:
        raise ShapeError(f"distances must be [N, K] with K >= 1, got {d.shape}")
    w = 1.0 - _softmax_np(d.astype(d.dtype), axis=1)
    return w[..., None]


def angle_compensation(relative_pos: np.ndarray, norm: str = "l2") -> np.ndarray:
    """Normalized sin/cos of the xy, yz and zx plane angles of each delta.

    atan2(0, 0) is taken as 0, so the self-neighbor (zero delta) gets the
    same descriptor as a delta along +x. The sin/cos pairs make the
    representation continuous where a plain arctangent would jump near
    +-pi/2.
    """
    rel = np.asarray(relative_pos)
    if rel.shape[-1] != 3:
        raise ShapeError(f"relative positions must end in dimension 3, got {rel.shape}")
    dx, dy, dz = rel[..., 0], rel[..., 1], rel[..., 2]
    theta_xy = np.arctan2(dy, dx)
    theta_yz = np.arctan2(dz, dy)
    theta_zx = np.arctan2(dz, dx)
    comp = np.stack(
        [np.sin(theta_xy), np.cos(theta_xy),
         np.sin(theta_yz), np.cos(theta_yz),
         np.sin(theta_zx), np.cos(theta_zx)], axis=-1)
    if norm == "l2":
        # each sin/cos pair has unit norm, so the 6-vector norm is sqrt(3)
        comp = comp / np.sqrt(np.sum(comp * comp, axis=-1, keepdims=True))
    elif norm != "none":
        raise ValueError(f"unknown angle normalization {norm!r}")
    return comp.astype(rel.dtype)


def spatial_descriptors(cloud: PointCloud, index: NeighborhoodIndex,
                        norm: str = "l2", dtype=np.float32) -> SpatialDescriptor:
    """Assemble the per-neighbor [relative_pos | D~ | angles] descriptor."""
    pos = cloud.positions.astype(dtype)
    rel = pos[index.neighbor_ids] - pos[:, None, :]
    weights = inverse_distance_weights(index.distances.astype(dtype))
    angles = angle_compensation(rel, norm=norm)
    return SpatialDescriptor(rel, weights.astype(dtype), angles)


class ElseEncoder:
    """Shared-MLP projection of the spatial descriptor, one per block."""

    def __init__(self, d_g: int, widths: tuple[int, ...] = (),
                 use_full_descriptor: bool = True, angle_norm: str = "l2",
                 negative_slope: float = 0.2,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        self.use_full_descriptor = use_full_descriptor
        self.angle_norm = angle_norm
        self.dtype = dtype
        d_in = DESCRIPTOR_DIM if use_full_descriptor else 3
        self.mlp = MlpStack([d_in, *widths, d_g], final_activation="leaky_relu",
                            negative_slope=negative_slope, rng=rng, dtype=dtype)

    def descriptor(self, cloud: PointCloud, index: NeighborhoodIndex) -> np.ndarray:
        if self.use_full_descriptor:
            return spatial_descriptors(cloud, index, self.angle_norm, self.dtype).concat()
        pos = cloud.positions.astype(self.dtype)
        return pos[index.neighbor_ids] - pos[:, None, :]

    def __call__(self, cloud: PointCloud, index: NeighborhoodIndex) -> Tensor:
        return self.mlp(Tensor(self.descriptor(cloud, index), dtype=self.dtype))

    def parameters(self, prefix: str):
        return self.mlp.parameters(f"{prefix}.mlp")


def else_forward(cloud: PointCloud, index: NeighborhoodIndex, mlp) -> Tensor:
    """Project the full 10-dim descriptor through a caller-supplied MLP."""
    desc = spatial_descriptors(cloud, index).concat()
    return mlp(Tensor(desc))
