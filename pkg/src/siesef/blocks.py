"""Network assembly: reverse-bottleneck point blocks and the multi-resolution
encoder-decoder.

Each encoder level runs a residual block (spatial encoding -> two pooling
modules -> reverse-bottleneck projection -> shortcut + Leaky ReLU) and then
randomly downsamples. The decoder upsamples by nearest-neighbor copy, concats
the skip features, and projects back down. A two-layer head emits per-point
class logits.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor as T
from .else_encoding import ElseEncoder
from .errors import ConfigError, ShapeError
from .neighborhood import (NeighborhoodIndex, PointCloud, SamplingMap,
                           knn_search, random_downsample, upsample_features)
from .nn import MlpLayer
from .seap import MaxPoolBaseline, SeapPool, gather_neighborhood
from .tensor import Tensor

POOLING_MODES = ("seap", "max")


@dataclass
class ModelConfig:
    """Layer widths, neighborhood size, ablation switches, and optimizer
    hyperparameters for one model."""

    num_classes: int
    k_neighbors: int = 16
    level_widths: tuple[int, ...] = (32, 64, 128, 256)
    downsample_ratio: float = 0.25
    d_g: int = 16
    use_else: bool = True  # False: relative positions only (A1/A3 encoders)
    pooling: str = "seap"  # "max" selects the A1/A2 pooling baseline
    expansion: int = 4  # reverse-bottleneck widening factor
    phi_activation: bool = True  # leaky relu after the expansion layer
    scalar_attention: bool = False
    angle_norm: str = "l2"
    leaky_slope: float = 0.2
    lr: float = 0.01
    lr_decay: float = 0.95
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    class_weights: tuple[float, ...] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.k_neighbors < 1:
            raise ConfigError(f"k_neighbors must be >= 1, got {self.k_neighbors}")
        if not 0 < self.downsample_ratio <= 1:
            raise ConfigError(f"downsample_ratio must be in (0, 1], got {self.downsample_ratio}")
        if self.pooling not in POOLING_MODES:
            raise ConfigError(f"pooling must be one of {POOLING_MODES}, got {self.pooling!r}")
        if not self.level_widths:
            raise ConfigError("level_widths must not be empty")
        if self.class_weights is not None and any(w <= 0 for w in self.class_weights):
            raise ConfigError("class_weights must all be positive")
        self.level_widths = tuple(int(w) for w in self.level_widths)


ABLATIONS = {
    "a1": {"use_else": False, "pooling": "max"},
    "a2": {"use_else": True, "pooling": "max"},
    "a3": {"use_else": False, "pooling": "seap"},
    "full": {"use_else": True, "pooling": "seap"},
}


def apply_ablation(config: ModelConfig, variant: str) -> ModelConfig:
    if variant not in ABLATIONS:
        raise ConfigError(f"unknown ablation {variant!r}, expected one of {sorted(ABLATIONS)}")
    return replace(config, **ABLATIONS[variant])


class Rbpc:
    """Reverse-bottleneck point convolution: concat two pooled features,
    expand channels per point, project to the block width."""

    def __init__(self, d_in: int, d_out: int, expansion: int = 4,
                 phi_activation: bool = True, negative_slope: float = 0.2,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        phi_act = "leaky_relu" if phi_activation else "identity"
        self.expand = MlpLayer(d_in, expansion * d_in, phi_act, negative_slope, rng, dtype)
        self.project = MlpLayer(expansion * d_in, d_out, "identity", rng=rng, dtype=dtype)

    def __call__(self, f1: Tensor, f2: Tensor) -> Tensor:
        if f1.shape != f2.shape:
            raise ShapeError(f"rbpc inputs must match, got {f1.shape} and {f2.shape}")
        return self.project(self.expand(T.concat([f1, f2], axis=1)))

    def parameters(self, prefix: str):
        params = self.expand.parameters(f"{prefix}.expand")
        params.update(self.project.parameters(f"{prefix}.project"))
        return params


def rbpc_forward(f1: Tensor, f2: Tensor, rbpc: Rbpc) -> Tensor:
    return rbpc(f1, f2)


class ResidualBlock:
    """Dual pooling over one neighborhood, reverse-bottleneck fusion, and a
    Leaky-ReLU-activated residual shortcut."""

    def __init__(self, d_in: int, d_out: int, config: ModelConfig,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        self.config = config
        d_g = config.d_g
        d_s = max(4, d_out // 2)
        self.encoder = ElseEncoder(d_g, use_full_descriptor=config.use_else,
                                   angle_norm=config.angle_norm,
                                   negative_slope=config.leaky_slope, rng=rng, dtype=dtype)
        if config.pooling == "seap":
            self.pool1 = SeapPool(d_in, d_g, d_s, config.scalar_attention,
                                  config.leaky_slope, rng, dtype)
            self.pool2 = SeapPool(d_in, d_g, d_s, config.scalar_attention,
                                  config.leaky_slope, rng, dtype)
        else:
            self.pool1 = MaxPoolBaseline(d_in, d_g, d_s, config.leaky_slope, rng, dtype)
            self.pool2 = MaxPoolBaseline(d_in, d_g, d_s, config.leaky_slope, rng, dtype)
        self.rbpc = Rbpc(2 * self.pool1.d_out, d_out, config.expansion,
                         config.phi_activation, config.leaky_slope, rng, dtype)
        self.shortcut = (MlpLayer(d_in, d_out, "identity", rng=rng, dtype=dtype)
                         if d_in != d_out else None)
        self.d_in = d_in
        self.d_out = d_out

    def __call__(self, features: Tensor, cloud: PointCloud,
                 index: NeighborhoodIndex) -> Tensor:
        g = self.encoder(cloud, index)
        nbhd = gather_neighborhood(features, index.neighbor_ids)
        fused = self.rbpc(self.pool1(nbhd, g), self.pool2(nbhd, g))
        skip = features if self.shortcut is None else self.shortcut(features)
        return T.leaky_relu(fused + skip, self.config.leaky_slope)

    def parameters(self, prefix: str):
        params = self.encoder.parameters(f"{prefix}.else")
        params.update(self.pool1.parameters(f"{prefix}.pool1"))
        params.update(self.pool2.parameters(f"{prefix}.pool2"))
        params.update(self.rbpc.parameters(f"{prefix}.rbpc"))
        if self.shortcut is not None:
            params.update(self.shortcut.parameters(f"{prefix}.shortcut"))
        return params


def residual_block(input_features: Tensor, cloud: PointCloud,
                   index: NeighborhoodIndex, block: ResidualBlock) -> Tensor:
    return block(input_features, cloud, index)


@dataclass
class Hierarchy:
    """Precomputed multi-resolution structure for one cloud: per-level clouds
    and neighbor indices, plus the sampling maps between levels."""

    clouds: list[PointCloud]
    indices: list[NeighborhoodIndex]
    maps: list[SamplingMap] = field(default_factory=list)


def build_hierarchy(cloud: PointCloud, config: ModelConfig, seed: int | None = None) -> Hierarchy:
    """Recenter, then alternate KNN indexing and random downsampling."""
    seed = config.seed if seed is None else seed
    current = cloud.recentered()
    clouds, indices, maps = [current], [], []
    levels = len(config.level_widths)
    for level in range(levels):
        k = min(config.k_neighbors, len(current))
        indices.append(knn_search(current, k))
        if level < levels - 1:
            current, smap = random_downsample(current, config.downsample_ratio,
                                              seed + level)
            clouds.append(current)
            maps.append(smap)
    return Hierarchy(clouds, indices, maps)


def permute_hierarchy(h: Hierarchy, perm: np.ndarray) -> Hierarchy:
    """Re-index the finest level of ``h`` by ``perm`` (new point j is old
    point perm[j]); deeper levels are untouched. Used by the point-order
    invariance harness to keep the sampled hierarchy consistent.
    """
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size)
    top = h.clouds[0]
    permuted_cloud = PointCloud(
        top.positions[perm],
        None if top.labels is None else top.labels[perm],
        None if top.intensity is None else top.intensity[perm],
    )
    top_index = h.indices[0]
    permuted_index = NeighborhoodIndex(
        inv[top_index.neighbor_ids[perm]], top_index.distances[perm])
    clouds = [permuted_cloud, *h.clouds[1:]]
    indices = [permuted_index, *h.indices[1:]]
    maps = list(h.maps)
    if maps:
        first = maps[0]
        maps[0] = SamplingMap(inv[first.kept_ids], first.upsample_ids[perm])
    return Hierarchy(clouds, indices, maps)


class SiesefNet:
    """Multi-resolution encoder-decoder emitting per-point class logits."""

    def __init__(self, config: ModelConfig, dtype=np.float32):
        self.config = config
        self.dtype = dtype
        rng = np.random.default_rng(config.seed)
        widths = config.level_widths
        self.input_mlp = MlpLayer(3, widths[0], "leaky_relu", config.leaky_slope, rng, dtype)
        self.blocks = []
        d_prev = widths[0]
        for w in widths:
            self.blocks.append(ResidualBlock(d_prev, w, config, rng, dtype))
            d_prev = w
        self.decoder_mlps = []
        d_deep = widths[-1]
        for w in reversed(widths[:-1]):
            self.decoder_mlps.append(
                MlpLayer(d_deep + w, w, "leaky_relu", config.leaky_slope, rng, dtype))
            d_deep = w
        self.head_hidden = MlpLayer(widths[0], widths[0], "leaky_relu",
                                    config.leaky_slope, rng, dtype)
        self.head_out = MlpLayer(widths[0], config.num_classes, "identity", rng=rng, dtype=dtype)

    def parameters(self) -> dict[str, Tensor]:
        params = self.input_mlp.parameters("input")
        for i, block in enumerate(self.blocks):
            params.update(block.parameters(f"enc.{i}"))
        for i, mlp in enumerate(self.decoder_mlps):
            params.update(mlp.parameters(f"dec.{i}"))
        params.update(self.head_hidden.parameters("head.hidden"))
        params.update(self.head_out.parameters("head.out"))
        return params

    def zero_grad(self):
        for p in self.parameters().values():
            p.grad = None

    def forward(self, hierarchy: Hierarchy) -> Tensor:
        clouds, indices, maps = hierarchy.clouds, hierarchy.indices, hierarchy.maps
        # the geometry stays metric; only the entry features are brought to
        # unit scale so the init variance does not depend on scene extent
        positions = clouds[0].positions
        # math.fsum is exactly rounded, so the scale (and hence the logits)
        # is bit-identical under any reordering of the points
        sq = positions.astype(np.float64).ravel() ** 2
        scale = math.sqrt(math.fsum(sq) / sq.size)
        feats = self.input_mlp(Tensor(positions / max(scale, 1e-12), dtype=self.dtype))
        skips = []
        for level, block in enumerate(self.blocks):
            feats = block(feats, clouds[level], indices[level])
            if level < len(self.blocks) - 1:
                skips.append(feats)
                feats = T.gather_rows(feats, maps[level].kept_ids)
        for mlp, smap, skip in zip(self.decoder_mlps, reversed(maps), reversed(skips)):
            up = upsample_features(feats, smap)
            feats = mlp(T.concat([up, skip], axis=1))
        logits = self.head_out(self.head_hidden(feats))
        return logits.check_finite("network logits")

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        params = self.parameters()
        missing = set(params) - set(state)
        if missing:
            raise ShapeError(f"checkpoint is missing parameters: {sorted(missing)[:5]}")
        for name, p in params.items():
            arr = np.asarray(state[name], dtype=self.dtype)
            if arr.shape != p.data.shape:
                raise ShapeError(
                    f"parameter {name!r}: checkpoint shape {arr.shape} != model {p.data.shape}")
            p.data = arr


def network_forward(cloud: PointCloud, config: ModelConfig,
                    model: SiesefNet | None = None,
                    hierarchy: Hierarchy | None = None,
                    seed: int | None = None) -> Tensor:
    """Convenience entry: build (or reuse) the hierarchy and run the model."""
    if model is None:
        model = SiesefNet(config)
    if hierarchy is None:
        hierarchy = build_hierarchy(cloud, config, seed)
    return model.forward(hierarchy)
