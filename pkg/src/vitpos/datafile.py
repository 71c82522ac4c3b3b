"""Binary dataset container (``ADPV``) with a JSON sidecar.

Layout, little-endian::

    magic    4s   b"ADPV"
    version  u16
    n_tx     u32
    n_sub    u32
    count    u64
    count x record:
        H     float32[n_tx * n_sub * 2]   row-major, interleaved (re, im)
        x, y  float32[2]                  meters

The sidecar ``<path>.json`` holds the scenario config and generation seed.
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .channel import ChannelSample

MAGIC = b"ADPV"
VERSION = 1
HEADER = struct.Struct("<4sHIIQ")


class DataError(ValueError):
    """Malformed or inconsistent dataset content."""


@dataclass
class Dataset:
    h: np.ndarray          # (S, n_tx, n_sub) complex128
    positions: np.ndarray  # (S, 2) float64
    meta: dict

    def __len__(self) -> int:
        return len(self.positions)


def _record_dtype(n_tx: int, n_sub: int) -> np.dtype:
    return np.dtype([("h", "<f4", (n_tx * n_sub * 2,)), ("pos", "<f4", (2,))])


def sidecar_path(path: str | Path) -> Path:
    return Path(str(path) + ".json")


def stack_samples(samples: Sequence[ChannelSample]) -> tuple[np.ndarray, np.ndarray]:
    """Stack channel samples, rejecting the first one whose shape disagrees."""
    if not samples:
        raise DataError("no samples")
    shape = np.shape(samples[0].h)
    if len(shape) != 2:
        raise DataError(f"record 0: H must be 2-D, got shape {shape}")
    for i, s in enumerate(samples):
        if np.shape(s.h) != shape:
            raise DataError(f"record {i}: H shape {np.shape(s.h)} differs from {shape}")
    h = np.stack([np.asarray(s.h, dtype=np.complex128) for s in samples])
    pos = np.array([s.position for s in samples], dtype=np.float64)
    return h, pos


def write_dataset(path: str | Path, samples: Sequence[ChannelSample], meta: dict) -> str:
    """Write samples and sidecar; returns the sha256 hex digest of the binary file."""
    h, pos = stack_samples(samples)
    S, n_tx, n_sub = h.shape
    rec = np.zeros(S, dtype=_record_dtype(n_tx, n_sub))
    inter = np.empty((S, n_tx, n_sub, 2), dtype="<f4")
    inter[..., 0] = h.real
    inter[..., 1] = h.imag
    rec["h"] = inter.reshape(S, -1)
    rec["pos"] = pos
    blob = HEADER.pack(MAGIC, VERSION, n_tx, n_sub, S) + rec.tobytes()
    Path(path).write_bytes(blob)
    with open(sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return hashlib.sha256(blob).hexdigest()


def read_dataset(path: str | Path) -> Dataset:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < HEADER.size:
        raise DataError(f"{path}: file too short for a header")
    magic, version, n_tx, n_sub, count = HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise DataError(f"{path}: unsupported version {version}")
    dt = _record_dtype(n_tx, n_sub)
    expected = HEADER.size + count * dt.itemsize
    if len(blob) != expected:
        raise DataError(
            f"{path}: header declares {count} records ({expected} bytes) but file has {len(blob)}")
    rec = np.frombuffer(blob, dtype=dt, count=count, offset=HEADER.size)
    inter = rec["h"].reshape(count, n_tx, n_sub, 2).astype(np.float64)
    h = inter[..., 0] + 1j * inter[..., 1]
    pos = rec["pos"].astype(np.float64)
    side = sidecar_path(path)
    meta = json.loads(side.read_text(encoding="utf-8")) if side.exists() else {}
    return Dataset(h, pos, meta)


def file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
