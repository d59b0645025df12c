"""Readers/writers for LiDAR scan formats, the synthetic scene generator, and
run-configuration parsing.

Binary formats are bit-exact: every reader is the inverse of its writer.
Malformed input raises FormatError naming the offending field/offset, never a
bare crash.
"""
from __future__ import annotations

import json
import math
import os
import warnings

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .blocks import ModelConfig
from .errors import ConfigError, FormatError
from .neighborhood import PointCloud

IGNORE_LABEL = 255
DATA_DIR_ENV = "SIESEF_DATA_DIR"


# ---------------------------------------------------------------------------
# SemanticKITTI binary scans and labels
# ---------------------------------------------------------------------------

@dataclass
class KittiScan:
    """x, y, z, remission as little-endian f32 quadruples, plus optional
    per-point u32 labels (low 16 bits semantic, high 16 bits instance)."""

    points: np.ndarray  # [N, 4] float32
    semantic: np.ndarray | None = None  # [N] uint16 raw semantic ids
    instance: np.ndarray | None = None  # [N] uint16


def read_kitti_bin(data: bytes) -> KittiScan:
    if len(data) % 16 != 0:
        raise FormatError(f"scan length {len(data)} bytes is not a multiple of 16")
    points = np.frombuffer(data, dtype="<f4").reshape(-1, 4).copy()
    return KittiScan(points)


def write_kitti_bin(scan: KittiScan) -> bytes:
    return np.ascontiguousarray(scan.points, dtype="<f4").tobytes()


def read_kitti_label(data: bytes, remap: dict[int, int] | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Return (labels, instance). With a remap table the labels are contiguous
    train ids with unmapped raw ids sent to the ignore label 255; without one
    they are the raw semantic ids."""
    if len(data) % 4 != 0:
        raise FormatError(f"label length {len(data)} bytes is not a multiple of 4")
    raw = np.frombuffer(data, dtype="<u4")
    semantic = (raw & 0xFFFF).astype(np.int64)
    instance = (raw >> 16).astype(np.uint16)
    if remap is not None:
        table = np.full(65536, IGNORE_LABEL, dtype=np.int64)
        for src, dst in remap.items():
            table[int(src)] = int(dst)
        semantic = table[semantic]
    return semantic, instance


def write_kitti_label(semantic: np.ndarray, instance: np.ndarray | None = None) -> bytes:
    semantic = np.asarray(semantic, dtype=np.uint32)
    raw = semantic & np.uint32(0xFFFF)
    if instance is not None:
        raw = raw | (np.asarray(instance, dtype=np.uint32) << np.uint32(16))
    return np.ascontiguousarray(raw, dtype="<u4").tobytes()


def load_remap(path: str | Path | None = None) -> dict[int, int]:
    """Load a raw-id -> train-id table; defaults to the packaged 19-class
    SemanticKITTI mapping."""
    if path is None:
        text = resources.files("siesef.data").joinpath("semantic_kitti_remap.json").read_text()
    else:
        text = Path(path).read_text()
    doc = json.loads(text)
    return {int(k): int(v) for k, v in doc["map"].items()}


# ---------------------------------------------------------------------------
# PLY subset (ascii 1.0 and binary_little_endian 1.0)
# ---------------------------------------------------------------------------

_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}
_LABEL_PROPERTY_NAMES = ("label", "class", "scalar_label", "scalar_Label", "semantic")


@dataclass
class PlyCloud:
    """Vertex positions (f32) plus an optional per-vertex integer label.

    ``offset`` records the centroid subtracted when double-precision input
    (UTM-scale coordinates) was re-centered before the f32 conversion.
    """

    positions: np.ndarray  # [N, 3] float32
    labels: np.ndarray | None = None
    offset: np.ndarray = field(default_factory=lambda: np.zeros(3))


def _parse_ply_header(data: bytes):
    end = data.find(b"end_header\n")
    if not data.startswith(b"ply") or end < 0:
        raise FormatError("not a PLY file: missing 'ply' magic or 'end_header'")
    header = data[:end].decode("ascii", errors="replace").splitlines()
    body = data[end + len(b"end_header\n"):]
    fmt = None
    elements: list[dict] = []
    for line in header[1:]:
        parts = line.split()
        if not parts or parts[0] == "comment":
            continue
        if parts[0] == "format":
            if parts[1] not in ("ascii", "binary_little_endian"):
                raise FormatError(f"unsupported PLY encoding {parts[1]!r}")
            fmt = parts[1]
        elif parts[0] == "element":
            elements.append({"name": parts[1], "count": int(parts[2]), "props": []})
        elif parts[0] == "property":
            if not elements:
                raise FormatError("property declared before any element")
            if parts[1] == "list":
                elements[-1]["props"].append(("list", parts[-1]))
            else:
                if parts[1] not in _PLY_TYPES:
                    raise FormatError(f"unsupported property type {parts[1]!r} on {parts[2]!r}")
                elements[-1]["props"].append((parts[1], parts[2]))
    if fmt is None:
        raise FormatError("PLY header has no format line")
    return fmt, elements, body


def read_ply(data: bytes) -> PlyCloud:
    """Extract vertex positions (and a label property when present)."""
    fmt, elements, body = _parse_ply_header(data)
    pos = 0  # byte offset (binary) into the body
    ascii_lines = None
    line_pos = 0  # line offset (ascii) into the body
    if fmt == "ascii":
        ascii_lines = [l for l in body.decode("ascii", errors="replace").splitlines() if l.strip()]
    for elem in elements:
        has_list = any(t == "list" for t, _ in elem["props"])
        if elem["name"] != "vertex":
            if has_list:
                raise FormatError(
                    f"element {elem['name']!r} uses list properties, which this reader "
                    "cannot skip; only scalar-property PLY files are supported")
            if fmt == "binary_little_endian":
                stride = sum(np.dtype("<" + _PLY_TYPES[t]).itemsize for t, _ in elem["props"])
                pos += stride * elem["count"]
            else:
                line_pos += elem["count"]
            continue

        if has_list:
            raise FormatError("vertex element with list properties is not supported")
        names = [n for _, n in elem["props"]]
        for needed in ("x", "y", "z"):
            if needed not in names:
                raise FormatError(f"vertex element lacks property {needed!r}")
        known = {"x", "y", "z"}
        label_prop = next((n for n in names if n in _LABEL_PROPERTY_NAMES), None)
        skipped = [n for n in names if n not in known and n != label_prop]
        if skipped:
            warnings.warn(f"ignoring unsupported vertex properties {skipped}", stacklevel=2)

        dtype = np.dtype([(n, "<" + _PLY_TYPES[t]) for t, n in elem["props"]])
        count = elem["count"]
        if fmt == "binary_little_endian":
            need = dtype.itemsize * count
            if len(body) - pos < need:
                raise FormatError(
                    f"vertex element truncated: header declares {count} rows "
                    f"({need} bytes) but only {len(body) - pos} bytes remain")
            table = np.frombuffer(body, dtype=dtype, count=count, offset=pos)
        else:
            rows = ascii_lines[line_pos:]
            if len(rows) < count:
                raise FormatError(
                    f"vertex element truncated: header declares {count} rows, body has {len(rows)}")
            table = np.array([tuple(r.split()[: len(names)]) for r in rows[:count]], dtype=dtype)

        xyz = np.stack([table["x"], table["y"], table["z"]], axis=1).astype(np.float64)
        offset = np.zeros(3)
        if any(_PLY_TYPES[t] == "f8" for t, n in elem["props"] if n in known):
            # UTM-scale doubles: re-center before the f32 cast
            offset = xyz.mean(axis=0) if len(xyz) else offset
            xyz = xyz - offset
        labels = None
        if label_prop is not None:
            labels = table[label_prop].astype(np.int64)
        return PlyCloud(xyz.astype(np.float32), labels, offset)
    raise FormatError("PLY file has no vertex element")


def write_ply(cloud: PlyCloud, binary: bool = True) -> bytes:
    """Write x, y, z (f32) and, when present, an int32 'label' property."""
    n = cloud.positions.shape[0]
    props = [("f4", "x"), ("f4", "y"), ("f4", "z")]
    names = {"f4": "float", "i4": "int"}
    if cloud.labels is not None:
        props.append(("i4", "label"))
    header = ["ply",
              f"format {'binary_little_endian' if binary else 'ascii'} 1.0",
              f"element vertex {n}"]
    header += [f"property {names[t]} {p}" for t, p in props]
    header.append("end_header")
    head = ("\n".join(header) + "\n").encode("ascii")

    table = np.empty(n, dtype=np.dtype([(p, "<" + t) for t, p in props]))
    pos = np.ascontiguousarray(cloud.positions, dtype=np.float32)
    table["x"], table["y"], table["z"] = pos[:, 0], pos[:, 1], pos[:, 2]
    if cloud.labels is not None:
        table["label"] = np.asarray(cloud.labels, dtype=np.int32)
    if binary:
        return head + table.tobytes()
    lines = []
    for row in table:
        cells = [repr(float(row[p])) if t == "f4" else str(int(row[p])) for t, p in props]
        lines.append(" ".join(cells))
    return head + ("\n".join(lines) + "\n").encode("ascii")


def ply_to_point_cloud(ply: PlyCloud) -> PointCloud:
    return PointCloud(ply.positions, ply.labels)


def kitti_to_point_cloud(scan: KittiScan, labels: np.ndarray | None = None) -> PointCloud:
    return PointCloud(scan.points[:, :3], labels, scan.points[:, 3])


# ---------------------------------------------------------------------------
# Synthetic labeled scenes
# ---------------------------------------------------------------------------

@dataclass
class SceneSpec:
    """Deterministic desk-scale scene: same spec, same cloud."""

    n_points: int = 2000
    layout: str = "planes_poles"  # or "parallel_planes"
    noise_sigma: float = 0.02
    seed: int = 0
    boundary_fraction: float = 0.1  # fraction of points in the class-contact strip

    def __post_init__(self):
        if self.n_points < 1:
            raise ConfigError("scene must contain at least one point")
        if self.layout not in ("planes_poles", "parallel_planes"):
            raise ConfigError(f"unknown scene layout {self.layout!r}")
        if not 0 <= self.boundary_fraction < 1:
            raise ConfigError("boundary_fraction must be in [0, 1)")


# strip half-width around the ground/wall contact line of the planes_poles
# scene; non-boundary surface points are kept out of this margin so the
# boundary population is countable exactly at zero noise
BOUNDARY_HALF_WIDTH = 0.3

SCENE_CLASSES = {"planes_poles": 3, "parallel_planes": 2}


def generate_scene(spec: SceneSpec) -> PointCloud:
    rng = np.random.default_rng(spec.seed)
    if spec.layout == "parallel_planes":
        return _parallel_planes(spec, rng)
    return _planes_poles(spec, rng)


def _parallel_planes(spec: SceneSpec, rng) -> PointCloud:
    n = spec.n_points
    n_low = n // 2
    xy = rng.uniform(0.0, 5.0, size=(n, 2))
    z = np.concatenate([np.zeros(n_low), np.ones(n - n_low)])
    labels = np.concatenate([np.zeros(n_low, np.int64), np.ones(n - n_low, np.int64)])
    pos = np.column_stack([xy, z]) + rng.normal(0.0, spec.noise_sigma, size=(n, 3))
    return PointCloud(pos.astype(np.float32), labels)


def _planes_poles(spec: SceneSpec, rng) -> PointCloud:
    """Ground plane (class 0) meeting a wall (class 1) along y=5, plus
    scattered vertical poles (class 2). A deliberate strip of points straddles
    the ground/wall contact line to exercise boundary ambiguity."""
    n = spec.n_points
    n_boundary = int(round(n * spec.boundary_fraction))
    n_rest = n - n_boundary
    n_ground = int(round(n_rest * 0.45))
    n_wall = int(round(n_rest * 0.30))
    n_poles = n_rest - n_ground - n_wall
    w = BOUNDARY_HALF_WIDTH

    parts, labels = [], []

    # ground: z = 0, y kept outside the boundary margin
    gy = rng.uniform(0.0, 10.0 - 2 * w, size=n_ground)
    gy = np.where(gy < 5.0 - w, gy, gy + 2 * w)
    ground = np.column_stack([rng.uniform(0.0, 10.0, n_ground), gy, np.zeros(n_ground)])
    parts.append(ground)
    labels.append(np.zeros(n_ground, np.int64))

    # wall: y = 5, z kept above the boundary margin
    wall = np.column_stack([
        rng.uniform(0.0, 10.0, n_wall),
        np.full(n_wall, 5.0),
        rng.uniform(w, 3.0, n_wall),
    ])
    parts.append(wall)
    labels.append(np.ones(n_wall, np.int64))

    # poles: thin vertical cylinders on the ground side, away from the wall
    n_pole_objects = max(1, n_poles // 60)
    centers = np.column_stack([
        rng.uniform(0.5, 9.5, n_pole_objects),
        rng.uniform(0.5, 4.0, n_pole_objects),
    ])
    which = rng.integers(0, n_pole_objects, n_poles)
    phi = rng.uniform(0.0, 2 * math.pi, n_poles)
    radius = 0.06
    poles = np.column_stack([
        centers[which, 0] + radius * np.cos(phi),
        centers[which, 1] + radius * np.sin(phi),
        rng.uniform(0.0, 2.5, n_poles),
    ])
    parts.append(poles)
    labels.append(np.full(n_poles, 2, np.int64))

    # boundary strip: half on the ground just before the wall, half on the
    # wall just above the ground; labels stay true to the generating surface
    n_bg = n_boundary // 2
    n_bw = n_boundary - n_bg
    strip_ground = np.column_stack([
        rng.uniform(0.0, 10.0, n_bg),
        rng.uniform(5.0 - w, 5.0, n_bg),
        np.zeros(n_bg),
    ])
    strip_wall = np.column_stack([
        rng.uniform(0.0, 10.0, n_bw),
        np.full(n_bw, 5.0),
        rng.uniform(0.0, w, n_bw),
    ])
    parts += [strip_ground, strip_wall]
    labels += [np.zeros(n_bg, np.int64), np.ones(n_bw, np.int64)]

    pos = np.concatenate(parts, axis=0)
    lab = np.concatenate(labels)
    pos = pos + rng.normal(0.0, spec.noise_sigma, size=pos.shape)
    order = rng.permutation(n)
    return PointCloud(pos[order].astype(np.float32), lab[order])


def boundary_strip_count(cloud: PointCloud) -> int:
    """Points inside the ground/wall contact strip of the planes_poles scene
    (for the generator's counting check; exact at zero noise)."""
    pos = cloud.positions
    near_line = (np.abs(pos[:, 1] - 5.0) <= BOUNDARY_HALF_WIDTH) & \
                (pos[:, 2] <= BOUNDARY_HALF_WIDTH) & (pos[:, 2] >= -1e-6)
    not_pole = cloud.labels != 2 if cloud.labels is not None else True
    return int(np.count_nonzero(near_line & not_pole))


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------

@dataclass
class TrainParams:
    epochs: int = 50
    steps_per_epoch: int = 4
    val_fraction: float = 0.2
    seed: int = 0


@dataclass
class RunConfig:
    model: ModelConfig
    train: TrainParams
    scene: SceneSpec | None = None
    data: dict | None = None  # {"source": "ply"|"kitti", "cloud": path, "labels": path}
    out_dir: str = "runs/latest"


def resolve_data_path(path: str | Path) -> Path:
    """Relative data paths resolve against $SIESEF_DATA_DIR when it is set."""
    p = Path(path)
    root = os.environ.get(DATA_DIR_ENV)
    if root and not p.is_absolute():
        return Path(root) / p
    return p


def load_run_config(path: str | Path) -> RunConfig:
    try:
        doc = tomllib.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid TOML: {exc}") from None

    if "model" not in doc:
        raise ConfigError(f"config {path} lacks the required [model] section")
    model_doc = dict(doc["model"])
    if "level_widths" in model_doc:
        model_doc["level_widths"] = tuple(model_doc["level_widths"])
    if "class_weights" in model_doc:
        model_doc["class_weights"] = tuple(model_doc["class_weights"])
    try:
        model = ModelConfig(**model_doc)
    except TypeError as exc:
        raise ConfigError(f"bad [model] section in {path}: {exc}") from None

    train = TrainParams(**doc.get("train", {}))
    scene = SceneSpec(**doc["scene"]) if "scene" in doc else None
    data = doc.get("data")
    if scene is None and data is None:
        raise ConfigError(f"config {path} must declare a [scene] or [data] section")
    out_dir = doc.get("output", {}).get("dir", "runs/latest")
    return RunConfig(model=model, train=train, scene=scene, data=data, out_dir=out_dir)


def load_training_cloud(run: RunConfig) -> PointCloud:
    """Materialize the labeled training cloud a run config points at."""
    if run.scene is not None:
        return generate_scene(run.scene)
    source = run.data.get("source")
    if source == "ply":
        ply = read_ply(resolve_data_path(run.data["cloud"]).read_bytes())
        if ply.labels is None:
            raise ConfigError("PLY training data carries no label property")
        return ply_to_point_cloud(ply)
    if source == "kitti":
        scan = read_kitti_bin(resolve_data_path(run.data["cloud"]).read_bytes())
        remap_path = run.data.get("remap")
        labels, _ = read_kitti_label(
            resolve_data_path(run.data["labels"]).read_bytes(), load_remap(remap_path))
        return kitti_to_point_cloud(scan, labels)
    raise ConfigError(f"unknown data source {source!r}")
