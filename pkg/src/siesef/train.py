"""Full-batch training loop with per-epoch validation metrics.

The cloud's multi-resolution hierarchy is sampled once up front (the scene is
static), so each optimizer step is a pure forward/backward over frozen
neighborhoods. The learning rate decays multiplicatively at every epoch
boundary; the best-validation-mIoU weights are kept as the checkpoint.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .blocks import Hierarchy, ModelConfig, SiesefNet, build_hierarchy
from .errors import NumericError
from .loss import inverse_sqrt_frequency_weights, weighted_cross_entropy
from .metrics import ConfusionMatrix, miou, overall_accuracy
from .neighborhood import PointCloud
from .nn import Adam
from .dataio import TrainParams


@dataclass
class TrainResult:
    model: SiesefNet
    hierarchy: Hierarchy
    records: list[dict] = field(default_factory=list)
    best_state: dict | None = None
    best_miou: float = -1.0
    val_mask: np.ndarray | None = None


def split_validation(n: int, fraction: float, seed: int) -> np.ndarray:
    """Boolean mask marking the held-out points."""
    rng = np.random.default_rng(seed)
    n_val = int(n * fraction)
    mask = np.zeros(n, dtype=bool)
    mask[rng.choice(n, size=n_val, replace=False)] = True
    return mask


def evaluate_split(logits: np.ndarray, labels: np.ndarray, mask: np.ndarray,
                   num_classes: int) -> tuple[float, float]:
    predictions = logits.argmax(axis=1)
    cm = ConfusionMatrix(num_classes).accumulate(predictions[mask], labels[mask])
    return overall_accuracy(cm), miou(cm)


def train_model(cloud: PointCloud, config: ModelConfig, params: TrainParams,
                log_file=None) -> TrainResult:
    if cloud.labels is None:
        raise ValueError("training requires a labeled cloud")
    n = len(cloud)
    val_mask = split_validation(n, params.val_fraction, params.seed)
    train_labels = cloud.labels.copy()
    train_labels[val_mask] = 255  # held out of the loss via the ignore label

    weights = (np.asarray(config.class_weights, dtype=np.float64)
               if config.class_weights is not None
               else inverse_sqrt_frequency_weights(train_labels, config.num_classes))

    model = SiesefNet(config)
    hierarchy = build_hierarchy(cloud, config, params.seed)
    optimizer = Adam(model.parameters(), lr=config.lr, beta1=config.beta1,
                     beta2=config.beta2, eps=config.eps, lr_decay=config.lr_decay)

    result = TrainResult(model=model, hierarchy=hierarchy, val_mask=val_mask)
    for epoch in range(params.epochs):
        last_loss = float("nan")
        for step in range(params.steps_per_epoch):
            optimizer.zero_grad()
            logits = model.forward(hierarchy)
            loss = weighted_cross_entropy(logits, train_labels, weights)
            last_loss = loss.item()
            if not np.isfinite(last_loss):
                raise NumericError(f"loss became non-finite at epoch {epoch}, step {step}")
            loss.backward()
            optimizer.step()

        logits = model.forward(hierarchy).numpy()
        oa, m = evaluate_split(logits, cloud.labels, val_mask, config.num_classes)
        record = {"epoch": epoch, "lr": optimizer.lr, "loss": last_loss,
                  "oa": oa, "miou": m}
        result.records.append(record)
        if log_file is not None:
            log_file.write(json.dumps(record, sort_keys=True) + "\n")
        if m > result.best_miou:
            result.best_miou = m
            result.best_state = model.state_dict()
        optimizer.end_epoch()

    if result.best_state is None:  # zero-epoch run: keep the initialization
        result.best_state = model.state_dict()
    return result
