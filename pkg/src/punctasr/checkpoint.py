"""Versioned binary checkpoint container with a shape manifest.

Layout: magic, format version, uint32 JSON-manifest length, the manifest
(sorted keys; holds metadata plus array names/shapes/dtypes in order), then
the raw little-endian array bytes in manifest order. Writing is fully
deterministic, so identical states produce byte-identical files.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Dict, Tuple

import numpy as np

_MAGIC = b"PASR"
_VERSION = 1


def save_checkpoint(path: Path, arrays: Dict[str, np.ndarray], meta: dict) -> None:
    names = sorted(arrays)
    manifest = {
        "meta": meta,
        "arrays": [
            {"name": n, "shape": list(arrays[n].shape), "dtype": str(arrays[n].dtype)}
            for n in names
        ],
    }
    blob = json.dumps(manifest, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<II", _VERSION, len(blob)))
        f.write(blob)
        for n in names:
            f.write(np.ascontiguousarray(arrays[n]).tobytes())


def load_checkpoint(path: Path) -> Tuple[Dict[str, np.ndarray], dict]:
    with open(path, "rb") as f:
        if f.read(4) != _MAGIC:
            raise ValueError(f"{path} is not a checkpoint file")
        version, blob_len = struct.unpack("<II", f.read(8))
        if version != _VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        manifest = json.loads(f.read(blob_len))
        arrays = {}
        for entry in manifest["arrays"]:
            shape = tuple(entry["shape"])
            dtype = np.dtype(entry["dtype"])
            n_bytes = dtype.itemsize * int(np.prod(shape, dtype=np.int64))
            arrays[entry["name"]] = np.frombuffer(
                f.read(n_bytes), dtype=dtype
            ).reshape(shape).copy()
    return arrays, manifest["meta"]
