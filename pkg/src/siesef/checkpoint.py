"""Versioned binary tensor container used for checkpoints and encoding dumps.

Layout: the magic string ``SIESEF01`` followed by one record per tensor:

    u32 LE   name length in bytes
    bytes    UTF-8 name
    u32 LE   rank
    u32 LE   dims (rank of them)
    f32 LE   payload, row-major

Records repeat until end of file.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"SIESEF01"


def save_tensors(path, tensors: dict[str, np.ndarray]) -> None:
    """Write named float arrays in insertion order; everything is cast to f32."""
    chunks = [MAGIC]
    for name, arr in tensors.items():
        data = np.ascontiguousarray(arr, dtype="<f4")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<I", data.ndim))
        chunks.append(struct.pack(f"<{data.ndim}I", *data.shape))
        chunks.append(data.tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_tensors(path) -> dict[str, np.ndarray]:
    """Read a checkpoint back into a name -> f32 array dict."""
    buf = Path(path).read_bytes()
    if buf[: len(MAGIC)] != MAGIC:
        raise FormatError(f"{path}: bad magic, expected {MAGIC!r}")
    out: dict[str, np.ndarray] = {}
    pos = len(MAGIC)
    total = len(buf)

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > total:
            raise FormatError(f"{path}: truncated while reading {what} at byte {pos}")
        piece = buf[pos : pos + n]
        pos += n
        return piece

    while pos < total:
        (name_len,) = struct.unpack("<I", take(4, "name length"))
        name = take(name_len, "name").decode("utf-8")
        (rank,) = struct.unpack("<I", take(4, f"rank of {name!r}"))
        dims = struct.unpack(f"<{rank}I", take(4 * rank, f"dims of {name!r}"))
        count = 1
        for d in dims:
            count *= d
        payload = take(4 * count, f"payload of {name!r}")
        out[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
    return out
