"""Self-contained invariant suite behind the ``verify`` CLI command.

Each check raises AssertionError (or any SiesefError) on failure; the runner
reports per-check wall time and the first failure names the module/operation.
A mutation hook exists as a CI negative control: ``mutate="softmax"`` corrupts
the softmax primitive for the duration of the run so the suite must fail and
must name softmax.
"""
from __future__ import annotations

import contextlib
import time

import numpy as np

from . import tensor as T
from .blocks import ModelConfig, SiesefNet, build_hierarchy, permute_hierarchy
from .checkpoint import load_tensors, save_tensors
from .else_encoding import inverse_distance_weights, spatial_descriptors
from .gradcheck import check_gradients
from .loss import weighted_cross_entropy
from .metrics import ConfusionMatrix, miou, overall_accuracy, per_class_iou
from .neighborhood import PointCloud, knn_bruteforce, knn_search
from .tensor import Tensor


def _small_config(**overrides) -> ModelConfig:
    base = dict(num_classes=3, k_neighbors=8, level_widths=(8, 12),
                downsample_ratio=0.5, d_g=6, seed=3)
    base.update(overrides)
    return ModelConfig(**base)


def check_softmax():
    rng = np.random.default_rng(0)
    x = Tensor(rng.normal(size=(5, 7)).astype(np.float32))
    s = T.softmax(x, axis=1).numpy()
    assert np.allclose(s.sum(axis=1), 1.0, atol=1e-6), "softmax slices must sum to 1"
    shifted = T.softmax(x + 3.5, axis=1).numpy()
    assert np.abs(s - shifted).max() < 1e-6, "softmax must be shift invariant"
    assert np.allclose(T.softmax(Tensor([[0.0, 0.0]]), axis=1).numpy(), 0.5, atol=1e-7)


def check_knn_oracle():
    rng = np.random.default_rng(1)
    for _ in range(10):
        n = int(rng.integers(5, 200))
        cloud = PointCloud(rng.uniform(0, 1, (n, 3)).astype(np.float32))
        k = int(rng.integers(1, min(16, n) + 1))
        fast = knn_search(cloud, k)
        slow = knn_bruteforce(cloud, k)
        assert np.array_equal(fast.neighbor_ids, slow.neighbor_ids), "knn ids diverge from oracle"
        assert np.abs(fast.distances - slow.distances).max() < 1e-5, "knn distances diverge"


def check_translation_invariance():
    rng = np.random.default_rng(2)
    cloud = PointCloud(rng.uniform(0, 2, (64, 3)).astype(np.float32))
    index = knn_search(cloud, 8)
    base = spatial_descriptors(cloud, index).concat()
    shifted_cloud = PointCloud(cloud.positions + np.float32([5.0, -2.0, 7.0]))
    shifted = spatial_descriptors(shifted_cloud, knn_search(shifted_cloud, 8)).concat()
    assert np.abs(base - shifted).max() <= 1e-5, "descriptors must ignore translations"
    # rotation control: the encoding is deliberately direction sensitive
    angle = 0.7
    rot = np.array([[np.cos(angle), -np.sin(angle), 0],
                    [np.sin(angle), np.cos(angle), 0], [0, 0, 1]], dtype=np.float32)
    rotated_cloud = PointCloud(cloud.positions @ rot.T)
    rotated = spatial_descriptors(rotated_cloud, knn_search(rotated_cloud, 8)).concat()
    assert np.abs(base - rotated).max() > 1e-3, "rotation must change the descriptors"


def check_inverse_distance_monotonicity():
    rng = np.random.default_rng(3)
    d = np.sort(rng.uniform(0, 2, (200, 12)), axis=1)
    w = inverse_distance_weights(d)[..., 0]
    assert (np.diff(w, axis=1) < 0).all(), "closer neighbors must receive larger weights"


def check_network_permutation():
    rng = np.random.default_rng(4)
    cloud = PointCloud(rng.uniform(0, 3, (80, 3)).astype(np.float32))
    config = _small_config()
    model = SiesefNet(config)
    h = build_hierarchy(cloud, config)
    logits = model.forward(h).numpy()
    perm = rng.permutation(len(cloud))
    permuted = model.forward(permute_hierarchy(h, perm)).numpy()
    assert np.abs(permuted - logits[perm]).max() <= 1e-5, \
        "logits must follow a point-order permutation"


def check_gradient_small():
    config = _small_config()
    rng = np.random.default_rng(5)
    cloud = PointCloud(rng.uniform(0, 2, (24, 3)).astype(np.float32),
                       rng.integers(0, 3, 24))
    model = SiesefNet(config, dtype=np.float64)
    h = build_hierarchy(cloud, config)
    params = model.parameters()
    # keep the oracle fast: spot-check a representative parameter subset
    subset = {k: v for k, v in params.items()
              if k.startswith(("input", "enc.0.pool1", "enc.0.else", "head"))}
    check_gradients(lambda: weighted_cross_entropy(model.forward(h), cloud.labels),
                    subset)


def check_metric_fixtures():
    cm = ConfusionMatrix(2, np.array([[1, 1], [0, 0]]))
    iou = per_class_iou(cm)
    assert abs(iou[0] - 0.5) < 1e-12 and abs(iou[1] - 0.0) < 1e-12
    cm2 = ConfusionMatrix(2, np.array([[3, 1], [1, 3]]))
    assert abs(overall_accuracy(cm2) - 0.75) < 1e-12
    assert abs(miou(ConfusionMatrix(2, np.diag([5, 5]))) - 1.0) < 1e-12


def check_loss_fixtures():
    logits = Tensor(np.zeros((10, 4), dtype=np.float32))
    loss = weighted_cross_entropy(logits, np.zeros(10, dtype=np.int64))
    assert abs(loss.item() - np.log(4)) < 1e-6, "uniform logits must give ln C"


def check_checkpoint_roundtrip(tmp_dir="/tmp"):
    import os
    import tempfile
    rng = np.random.default_rng(6)
    tensors = {"a.weight": rng.normal(size=(3, 4)).astype(np.float32),
               "b.bias": rng.normal(size=7).astype(np.float32)}
    fd, path = tempfile.mkstemp(suffix=".ckpt", dir=tmp_dir)
    os.close(fd)
    try:
        save_tensors(path, tensors)
        loaded = load_tensors(path)
        assert list(loaded) == list(tensors)
        for k in tensors:
            assert np.array_equal(loaded[k], tensors[k])
    finally:
        os.unlink(path)


CHECKS = [
    ("tensor.softmax", check_softmax),
    ("neighborhood.knn_oracle", check_knn_oracle),
    ("else.translation_invariance", check_translation_invariance),
    ("else.inverse_distance_monotonicity", check_inverse_distance_monotonicity),
    ("network.permutation_invariance", check_network_permutation),
    ("network.gradient_check", check_gradient_small),
    ("metrics.fixtures", check_metric_fixtures),
    ("loss.fixtures", check_loss_fixtures),
    ("checkpoint.roundtrip", check_checkpoint_roundtrip),
]


@contextlib.contextmanager
def _mutated(target: str | None):
    """CI negative control: corrupt a primitive so the suite must fail."""
    if target is None:
        yield
        return
    if target != "softmax":
        raise ValueError(f"unknown mutation target {target!r}")
    original = T.softmax

    def corrupted(a, axis=-1):
        out = original(a, axis=axis)
        return out + 1e-3  # breaks the sums-to-one contract

    T.softmax = corrupted
    try:
        yield
    finally:
        T.softmax = original


def run_verification(mutate: str | None = None, out=print) -> list[dict]:
    """Run every check; returns per-check records {name, ok, seconds, error}."""
    results = []
    with _mutated(mutate):
        for name, fn in CHECKS:
            start = time.perf_counter()
            try:
                fn()
                ok, err = True, None
            except Exception as exc:  # report, keep going
                ok, err = False, f"{type(exc).__name__}: {exc}"
            seconds = time.perf_counter() - start
            results.append({"name": name, "ok": ok, "seconds": round(seconds, 4),
                            "error": err})
            status = "PASS" if ok else "FAIL"
            line = f"{status} {name} ({seconds:.3f}s)"
            if err:
                line += f" -- {err}"
            out(line)
    return results
