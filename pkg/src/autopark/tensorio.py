"""Deterministic raw-tensor container: one .bin blob plus one .json sidecar.

The sidecar lists tensors in write order with dtype (always little-endian),
shape, and byte offset into the blob. Writing the same tensors twice yields
byte-identical files, which the reproducibility checks rely on.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

FORMAT = "tensor-pack-v1"

_LE_DTYPES = {"<f8", "<f4", "<i8", "<i4", "<u2", "|u1"}


def _canonical_dtype(arr: np.ndarray) -> str:
    dt = arr.dtype.newbyteorder("<") if arr.dtype.byteorder == ">" else arr.dtype
    name = dt.str
    if name == "|u1" or name in _LE_DTYPES:
        return name
    raise ValueError(f"unsupported tensor dtype {arr.dtype}")


def save_tensors(path_prefix, tensors: dict[str, np.ndarray], meta: dict | None = None) -> None:
    """Write tensors to {prefix}.bin with the manifest at {prefix}.json."""
    prefix = Path(path_prefix)
    entries = []
    offset = 0
    blobs = []
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr)
        dtype = _canonical_dtype(arr)
        data = arr.astype(dtype, copy=False).tobytes()
        entries.append(
            {"name": name, "dtype": dtype, "shape": list(arr.shape),
             "offset": offset, "nbytes": len(data)}
        )
        blobs.append(data)
        offset += len(data)
    manifest = {"format": FORMAT, "tensors": entries, "meta": meta or {}}
    with open(prefix.with_suffix(".bin"), "wb") as f:
        for blob in blobs:
            f.write(blob)
    with open(prefix.with_suffix(".json"), "w") as f:
        json.dump(manifest, f, sort_keys=True, separators=(",", ":"))
        f.write("\n")


def load_tensors(path_prefix) -> tuple[dict[str, np.ndarray], dict]:
    """Read back a tensor pack; returns (tensors, meta)."""
    prefix = Path(path_prefix)
    with open(prefix.with_suffix(".json")) as f:
        manifest = json.load(f)
    if manifest.get("format") != FORMAT:
        raise ValueError(f"unsupported tensor pack format {manifest.get('format')!r}")
    raw = prefix.with_suffix(".bin").read_bytes()
    tensors = {}
    for entry in manifest["tensors"]:
        data = raw[entry["offset"]:entry["offset"] + entry["nbytes"]]
        arr = np.frombuffer(data, dtype=np.dtype(entry["dtype"])).reshape(entry["shape"])
        tensors[entry["name"]] = arr.copy()
    return tensors, manifest.get("meta", {})
