"""Spatially-embedded adaptive pooling.

The adaptive branch weights each neighbor's semantic feature by a softmax
(over the K neighbors, per channel) of an MLP of the spatial encoding, then
sums. The max branch takes a per-channel max over the concatenated semantic
and spatial features. The pooled output is the concatenation of both
branches, so its width is d_s + (d_s + d_g).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ShapeError
from .nn import MlpLayer
from .tensor import Tensor


@dataclass
class SemanticNeighborhood:
    """Center features f_i and their gathered neighbor features f_i^k."""

    center_features: Tensor  # [N, d_f]
    neighbor_features: Tensor  # [N, K, d_f]

    def __post_init__(self):
        c, nb = self.center_features, self.neighbor_features
        if c.ndim != 2 or nb.ndim != 3 or c.shape[0] != nb.shape[0] or c.shape[1] != nb.shape[2]:
            raise ShapeError(
                f"inconsistent neighborhood shapes: center {c.shape}, neighbors {nb.shape}")


def gather_neighborhood(features: Tensor, neighbor_ids: np.ndarray) -> SemanticNeighborhood:
    return SemanticNeighborhood(features, T.gather_rows(features, neighbor_ids))


def local_semantic_features(nbhd: SemanticNeighborhood, mlp) -> Tensor:
    """Shared MLP over [f_i^k - f_i | f_i^k] per neighbor."""
    center = T.reshape(nbhd.center_features,
                       (nbhd.center_features.shape[0], 1, nbhd.center_features.shape[1]))
    relative = nbhd.neighbor_features - center
    return mlp(T.concat([relative, nbhd.neighbor_features], axis=2))


def adaptive_weights(g: Tensor, mlp) -> Tensor:
    """MLP of the spatial encoding, softmaxed over the K (neighbor) axis."""
    return T.softmax(mlp(g), axis=1)


def weighted_aggregate(features: Tensor, weights: Tensor) -> Tensor:
    """Elementwise product then sum over the K axis."""
    if features.shape != weights.shape:
        raise ShapeError(
            f"weighted_aggregate: feature shape {features.shape} != weight shape {weights.shape}")
    return T.tsum(features * weights, axis=1)


def max_branch(semantic: Tensor, g: Tensor) -> Tensor:
    """Per-channel max over K of the concatenated semantic+spatial features."""
    if semantic.shape[1] == 0:
        raise ShapeError("max pooling over an empty neighborhood")
    return T.tmax(T.concat([semantic, g], axis=2), axis=1)


class SeapPool:
    """One adaptive pooling module (semantic MLP + attention MLP)."""

    def __init__(self, d_f: int, d_g: int, d_s: int, scalar_attention: bool = False,
                 negative_slope: float = 0.2, rng: np.random.Generator | None = None,
                 dtype=np.float32):
        self.feature_mlp = MlpLayer(2 * d_f, d_s, "leaky_relu", negative_slope, rng, dtype)
        # attention logits per channel by default; the scalar variant shares
        # one weight across channels
        self.weight_mlp = MlpLayer(d_g, 1 if scalar_attention else d_s, "identity",
                                   rng=rng, dtype=dtype)
        self.scalar_attention = scalar_attention
        self.d_out = 2 * d_s + d_g

    def __call__(self, nbhd: SemanticNeighborhood, g: Tensor) -> Tensor:
        if nbhd.neighbor_features.shape[:2] != g.shape[:2]:
            raise ShapeError(
                f"semantic neighborhood {nbhd.neighbor_features.shape} and spatial "
                f"encoding {g.shape} disagree on [N, K]")
        semantic = local_semantic_features(nbhd, self.feature_mlp)
        w = adaptive_weights(g, self.weight_mlp)
        if self.scalar_attention:
            w = w * Tensor(np.ones(semantic.shape, dtype=semantic.dtype))
        adaptive = weighted_aggregate(semantic, w)
        return T.concat([adaptive, max_branch(semantic, g)], axis=1)

    def parameters(self, prefix: str):
        params = self.feature_mlp.parameters(f"{prefix}.feature")
        params.update(self.weight_mlp.parameters(f"{prefix}.weight"))
        return params


class MaxPoolBaseline:
    """Ablation pooling: max over K of [semantic | spatial], no attention."""

    def __init__(self, d_f: int, d_g: int, d_s: int, negative_slope: float = 0.2,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        self.feature_mlp = MlpLayer(2 * d_f, d_s, "leaky_relu", negative_slope, rng, dtype)
        self.d_out = d_s + d_g

    def __call__(self, nbhd: SemanticNeighborhood, g: Tensor) -> Tensor:
        semantic = local_semantic_features(nbhd, self.feature_mlp)
        return max_branch(semantic, g)

    def parameters(self, prefix: str):
        return self.feature_mlp.parameters(f"{prefix}.feature")


def maxpool_baseline(nbhd: SemanticNeighborhood, g: Tensor, mlp) -> Tensor:
    """Functional form of the max-pooling ablation with a caller-supplied MLP."""
    return max_branch(local_semantic_features(nbhd, mlp), g)
