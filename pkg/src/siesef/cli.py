"""Command-line entry point.

Subcommands: ``train`` (synthetic or file-based training), ``eval`` (metrics
from prediction/label files), ``encode`` (dump spatial and pooled encodings),
``verify`` (invariant suite). Exit codes: 0 success, 2 usage/data error,
3 numeric failure. Reports are emitted both as human-readable text and as
deterministic sorted-key JSON.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

from .blocks import ModelConfig, SiesefNet, apply_ablation, build_hierarchy
from .checkpoint import load_tensors, save_tensors
from .dataio import (load_run_config, load_training_cloud, read_kitti_bin,
                     read_ply, kitti_to_point_cloud, ply_to_point_cloud)
from .errors import NumericError, SiesefError
from .metrics import ConfusionMatrix, miou, overall_accuracy, per_class_iou
from .train import train_model
from .verify import run_verification

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="siesef",
                                     description="point-cloud segmentation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model from a run config")
    p_train.add_argument("--config", required=True, help="TOML run configuration")
    p_train.add_argument("--seed", type=int, default=None, help="override the run seed")
    p_train.add_argument("--ablation", choices=["a1", "a2", "a3", "full"], default=None)
    p_train.add_argument("--epochs", type=int, default=None)
    p_train.add_argument("--k", type=int, default=None, help="override k_neighbors")
    p_train.add_argument("--out", default=None, help="override the output directory")

    p_eval = sub.add_parser("eval", help="evaluate predictions against labels")
    p_eval.add_argument("--predictions", required=True)
    p_eval.add_argument("--labels", required=True)
    p_eval.add_argument("--classes", type=int, required=True)
    p_eval.add_argument("--out", default=None, help="write the JSON report here")

    p_enc = sub.add_parser("encode", help="dump spatial/pooled encodings for a cloud")
    p_enc.add_argument("--cloud", required=True, help=".ply or KITTI .bin cloud")
    p_enc.add_argument("--config", default=None, help="TOML run config (model shape)")
    p_enc.add_argument("--checkpoint", default=None, help="trained weights (optional)")
    p_enc.add_argument("--seed", type=int, default=0)
    p_enc.add_argument("--out", required=True)

    p_ver = sub.add_parser("verify", help="run the invariant suite")
    p_ver.add_argument("--mutate", default=None,
                       help="CI negative control: corrupt a primitive (e.g. softmax)")
    return parser


def _load_label_file(path: str) -> np.ndarray:
    """u32 little-endian binary (.label/.bin) or newline-separated text ints."""
    p = Path(path)
    if not p.exists():
        raise SiesefError(f"file not found: {path}")
    if p.suffix in (".txt", ".csv"):
        return np.loadtxt(p, dtype=np.int64).reshape(-1)
    data = p.read_bytes()
    if len(data) % 4 != 0:
        raise SiesefError(f"{path}: length {len(data)} not a multiple of 4 bytes")
    return (np.frombuffer(data, dtype="<u4") & 0xFFFF).astype(np.int64)


def _load_cloud_file(path: str):
    p = Path(path)
    if not p.exists():
        raise SiesefError(f"file not found: {path}")
    if p.suffix == ".ply":
        return ply_to_point_cloud(read_ply(p.read_bytes()))
    if p.suffix == ".bin":
        return kitti_to_point_cloud(read_kitti_bin(p.read_bytes()))
    raise SiesefError(f"unsupported cloud format {p.suffix!r} (expected .ply or .bin)")


def _write_report(report: dict, out_dir: Path, name: str = "report.json"):
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / name).write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")


def cmd_train(args) -> int:
    run = load_run_config(args.config)
    config = run.model
    if args.ablation:
        config = apply_ablation(config, args.ablation)
    if args.k is not None:
        config = dataclasses.replace(config, k_neighbors=args.k)
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
        run.train.seed = args.seed
        if run.scene is not None:
            run.scene.seed = args.seed
    if args.epochs is not None:
        run.train.epochs = args.epochs

    cloud = load_training_cloud(run)
    out_dir = Path(args.out if args.out else run.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    started = time.perf_counter()
    with open(out_dir / "metrics.jsonl", "w") as log:
        result = train_model(cloud, config, run.train, log_file=log)
    elapsed = time.perf_counter() - started

    save_tensors(out_dir / "checkpoint.ckpt", result.best_state)
    final = result.records[-1] if result.records else None
    report = {
        "command": "train",
        "ablation": args.ablation or "full",
        "config": dataclasses.asdict(config),
        "epochs": run.train.epochs,
        "log": result.records,
        "final": final,
        "best_miou": result.best_miou if result.records else None,
        "timing": {"train_seconds": round(elapsed, 3)},
    }
    _write_report(report, out_dir)
    if final:
        print(f"trained {run.train.epochs} epochs: "
              f"loss={final['loss']:.4f} oa={final['oa']:.4f} miou={final['miou']:.4f}")
    else:
        print("zero-epoch run: wrote initialized checkpoint, empty metric log")
    print(f"artifacts in {out_dir}")
    return EXIT_OK


def cmd_eval(args) -> int:
    predictions = _load_label_file(args.predictions)
    labels = _load_label_file(args.labels)
    if predictions.shape != labels.shape:
        raise SiesefError(
            f"length mismatch: {predictions.size} predictions vs {labels.size} labels")
    cm = ConfusionMatrix(args.classes).accumulate(predictions, labels)
    iou = per_class_iou(cm)
    report = {
        "command": "eval",
        "per_class_iou": [None if np.isnan(v) else round(float(v), 6) for v in iou],
        "miou": round(miou(cm), 6),
        "oa": round(overall_accuracy(cm), 6),
        "points": cm.total,
    }
    print(f"{'class':>8} {'IoU':>8}")
    for j, v in enumerate(iou):
        print(f"{j:>8} {'undef' if np.isnan(v) else f'{v:.4f}':>8}")
    print(f"mIoU {report['miou']:.4f}  OA {report['oa']:.4f}")
    print(json.dumps(report, sort_keys=True))
    if args.out:
        _write_report(report, Path(args.out).parent, Path(args.out).name)
    return EXIT_OK


def cmd_encode(args) -> int:
    cloud = _load_cloud_file(args.cloud)
    if args.config:
        config = load_run_config(args.config).model
    else:
        config = ModelConfig(num_classes=2, seed=args.seed)
    model = SiesefNet(config)
    if args.checkpoint:
        model.load_state_dict(load_tensors(args.checkpoint))
    hierarchy = build_hierarchy(cloud, config, args.seed)
    block = model.blocks[0]
    g = block.encoder(hierarchy.clouds[0], hierarchy.indices[0])
    feats = model.input_mlp(
        np.ascontiguousarray(hierarchy.clouds[0].positions))
    from .seap import gather_neighborhood
    nbhd = gather_neighborhood(feats, hierarchy.indices[0].neighbor_ids)
    pooled = block.pool1(nbhd, g)
    save_tensors(args.out, {"else.g": g.numpy(), "seap.pooled": pooled.numpy()})
    print(f"wrote else.g {tuple(g.shape)} and seap.pooled {tuple(pooled.shape)} to {args.out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    results = run_verification(mutate=args.mutate)
    failures = [r for r in results if not r["ok"]]
    print(json.dumps({"command": "verify", "checks": results}, sort_keys=True))
    return EXIT_OK if not failures else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"train": cmd_train, "eval": cmd_eval,
                "encode": cmd_encode, "verify": cmd_verify}
    try:
        return handlers[args.command](args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (SiesefError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def entry():  # console_scripts hook
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
