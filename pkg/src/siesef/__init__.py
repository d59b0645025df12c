"""Point-cloud semantic segmentation toolkit.

Local spatial encoding with inverse-distance weighting and angular
compensation, adaptive neighborhood pooling, reverse-bottleneck point blocks,
weighted cross-entropy training, and segmentation metrics, over a small
numpy-backed autodiff engine. The KNN hot loop runs on a compiled extension
when available, with a pure-numpy fallback selected at import.
"""
from .blocks import (ModelConfig, SiesefNet, apply_ablation, build_hierarchy,
                     network_forward)
from .errors import (ConfigError, FormatError, NumericError, ShapeError,
                     SiesefError, StateError)
from .neighborhood import (HAVE_COMPILED_KERNEL, NeighborhoodIndex, PointCloud,
                           SamplingMap, knn_bruteforce, knn_search,
                           random_downsample, upsample_features)
from .tensor import Tensor

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "FormatError", "HAVE_COMPILED_KERNEL", "ModelConfig",
    "NeighborhoodIndex", "NumericError", "PointCloud", "SamplingMap",
    "ShapeError", "SiesefError", "SiesefNet", "StateError", "Tensor",
    "apply_ablation", "build_hierarchy", "knn_bruteforce", "knn_search",
    "network_forward", "random_downsample", "upsample_features",
]
