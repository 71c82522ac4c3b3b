"""Model checkpoint container.

Layout, little-endian::

    magic     4s    b"VITC"
    version   u16
    meta_len  u32
    meta      JSON (sorted keys): kind, config, parameter names/shapes, extras
    params    float64 values of every tensor in declaration order
    digest    32 bytes sha256 over everything above
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .tensor import Tensor

MAGIC = b"VITC"
VERSION = 1
HEADER = struct.Struct("<4sHI")


class CheckpointError(ValueError):
    pass


def save_checkpoint(path: str | Path, kind: str, config: dict, params: dict[str, Tensor],
                    extra: dict | None = None) -> None:
    meta = {
        "kind": kind,
        "config": config,
        "params": [[name, list(t.shape)] for name, t in params.items()],
        "extra": extra or {},
    }
    meta_bytes = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = HEADER.pack(MAGIC, VERSION, len(meta_bytes)) + meta_bytes + b"".join(
        np.ascontiguousarray(t.data, dtype="<f8").tobytes() for t in params.values())
    Path(path).write_bytes(body + hashlib.sha256(body).digest())


def load_checkpoint(path: str | Path) -> tuple[str, dict, dict[str, Tensor], dict]:
    """Return ``(kind, config, params, extra)`` after verifying magic and checksum."""
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < HEADER.size + 32:
        raise CheckpointError(f"{path}: file too short")
    magic, version, meta_len = HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError(f"{path}: checksum mismatch")
    start = HEADER.size
    meta = json.loads(body[start:start + meta_len].decode("utf-8"))
    offset = start + meta_len
    params: dict[str, Tensor] = {}
    for name, shape in meta["params"]:
        n = int(np.prod(shape)) if shape else 1
        values = np.frombuffer(body, dtype="<f8", count=n, offset=offset).reshape(shape)
        params[name] = Tensor(values.copy(), requires_grad=True, name=name)
        offset += 8 * n
    if offset != len(body):
        raise CheckpointError(f"{path}: {len(body) - offset} trailing bytes after parameters")
    return meta["kind"], meta["config"], params, meta["extra"]
