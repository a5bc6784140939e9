"""Checkpoint format shared by every trained module.

Layout: 8-byte magic, little-endian uint64 header length, JSON header,
then the raw C-order array bytes back to back. The header records the
format version, a kind tag, architecture/config metadata, and the name,
dtype, shape and offset of every array, so files are self-describing and
byte-stable for identical parameters.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from flowdance.errors import MissingArtifactError, ValidationError

MAGIC = b"FDCKPT01"
FORMAT_VERSION = 1


def save_checkpoint(path, kind: str, arrays: dict, meta: dict | None = None) -> str:
    """Write arrays plus metadata; returns the sha256 content hash."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    entries = []
    blobs = []
    offset = 0
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        raw = arr.tobytes()
        entries.append(
            {
                "name": name,
                "dtype": str(arr.dtype),
                "shape": list(arr.shape),
                "offset": offset,
                "nbytes": len(raw),
            }
        )
        blobs.append(raw)
        offset += len(raw)
    header = {
        "format": FORMAT_VERSION,
        "kind": kind,
        "meta": meta or {},
        "arrays": entries,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(header_bytes)))
        f.write(header_bytes)
        for raw in blobs:
            f.write(raw)
    return content_hash(path)


def load_checkpoint(path, expect_kind: str | None = None):
    """Read (header, arrays) from a checkpoint file."""
    path = Path(path)
    if not path.is_file():
        raise MissingArtifactError(f"checkpoint not found: {path}")
    data = path.read_bytes()
    if data[:8] != MAGIC:
        raise ValidationError(f"{path.name}: not a flowdance checkpoint")
    (header_len,) = struct.unpack("<Q", data[8:16])
    header = json.loads(data[16 : 16 + header_len].decode())
    if header.get("format") != FORMAT_VERSION:
        raise ValidationError(f"{path.name}: unsupported checkpoint format {header.get('format')}")
    if expect_kind is not None and header.get("kind") != expect_kind:
        raise ValidationError(
            f"{path.name}: checkpoint kind is {header.get('kind')!r}, expected {expect_kind!r}"
        )
    base = 16 + header_len
    arrays = {}
    for entry in header["arrays"]:
        start = base + entry["offset"]
        raw = data[start : start + entry["nbytes"]]
        arrays[entry["name"]] = np.frombuffer(raw, dtype=entry["dtype"]).reshape(entry["shape"]).copy()
    return header, arrays


def content_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def dict_hash(obj) -> str:
    return hashlib.sha256(
        json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()
