"""Weighted cross-entropy objective and class-weight derivation."""
from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import ShapeError
from .tensor import Tensor

IGNORE_LABEL = 255
LOG_CLAMP = 1e-12


def weighted_cross_entropy(logits: Tensor, labels: np.ndarray,
                           class_weights: np.ndarray | None = None,
                           ignore_label: int = IGNORE_LABEL) -> Tensor:
    """-(1/N) sum_i w[label_i] * log softmax(logits)[i, label_i].

    Points carrying ``ignore_label`` are excluded from the average; the log
    is clamped at 1e-12 for stability.
    """
    logits = T.as_tensor(logits)
    if logits.ndim != 2:
        raise ShapeError(f"logits must be [N, C], got {logits.shape}")
    n, c = logits.shape
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise ShapeError(f"labels must be [N={n}], got {labels.shape}")
    valid = labels != ignore_label
    bad = valid & ((labels < 0) | (labels >= c))
    if bad.any():
        raise ShapeError(
            f"labels out of range [0, {c}): {np.unique(labels[bad])[:10].tolist()}")
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise ShapeError("no valid (non-ignored) labels in the batch")
    if class_weights is None:
        class_weights = np.ones(c)
    class_weights = np.asarray(class_weights, dtype=np.float64)
    if class_weights.shape != (c,):
        raise ShapeError(f"class_weights must be [C={c}], got {class_weights.shape}")

    # one-hot mask carrying the class weight, zeroed on ignored rows
    picked = np.zeros((n, c), dtype=logits.dtype)
    rows = np.nonzero(valid)[0]
    picked[rows, labels[rows]] = class_weights[labels[rows]]

    # log softmax(logits) clamped at log(1e-12), computed in log space so
    # saturated logits neither underflow nor kill the gradient spuriously
    shift = Tensor(logits.data.max(axis=1, keepdims=True))  # constant
    z = logits - shift
    log_probs = z - T.log(T.tsum(T.exp(z), axis=1, keepdims=True))
    log_probs = T.clip_min(log_probs, float(np.log(LOG_CLAMP)))
    weighted = log_probs * Tensor(picked, dtype=logits.dtype)
    return -T.tsum(weighted) * (1.0 / n_valid)


def inverse_sqrt_frequency_weights(labels: np.ndarray, num_classes: int,
                                   ignore_label: int = IGNORE_LABEL) -> np.ndarray:
    """Per-class 1/sqrt(frequency), normalized to mean 1 over present classes;
    absent classes get weight 1."""
    labels = np.asarray(labels)
    labels = labels[labels != ignore_label]
    counts = np.bincount(labels, minlength=num_classes).astype(np.float64)
    present = counts > 0
    weights = np.ones(num_classes)
    weights[present] = 1.0 / np.sqrt(counts[present])
    weights[present] /= weights[present].mean()
    return weights
