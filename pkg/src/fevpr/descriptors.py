"""Descriptor matrix export: raw float32 binary plus a JSON manifest.

The binary file holds little-endian 32-bit floats, row-major (one row per
sample); the sidecar ``<stem>.json`` records at least count, dimension,
source traverse, and checkpoint id so the matrix is self-describing.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


class DescriptorIOError(ValueError):
    pass


def manifest_path(binary_path: str | Path) -> Path:
    binary_path = Path(binary_path)
    return binary_path.with_suffix(binary_path.suffix + ".json")


def save_descriptors(
    path: str | Path,
    descriptors: np.ndarray,
    source_traverse: str = "",
    checkpoint_id: str = "",
    extra: dict | None = None,
) -> Path:
    path = Path(path)
    arr = np.ascontiguousarray(descriptors, dtype="<f4")
    if arr.ndim != 2:
        raise DescriptorIOError(f"descriptor matrix must be 2-D, got shape {arr.shape}")
    arr.tofile(path)
    manifest = {
        "count": int(arr.shape[0]),
        "dimension": int(arr.shape[1]),
        "source_traverse": source_traverse,
        "checkpoint_id": checkpoint_id,
        "dtype": "float32-le",
        "layout": "row-major",
    }
    manifest.update(extra or {})
    manifest_path(path).write_text(json.dumps(manifest, indent=2))
    return path


def load_descriptors(path: str | Path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    mpath = manifest_path(path)
    if not mpath.is_file():
        raise DescriptorIOError(f"missing descriptor manifest: {mpath}")
    manifest = json.loads(mpath.read_text())
    count, dim = int(manifest["count"]), int(manifest["dimension"])
    flat = np.fromfile(path, dtype="<f4")
    if flat.size != count * dim:
        raise DescriptorIOError(
            f"{path}: {flat.size} floats on disk but manifest says {count} x {dim}"
        )
    return flat.reshape(count, dim), manifest
