"""On-disk layout for composed datasets.

A dataset directory holds raw little-endian arrays (float32 images,
uint8 masks, int64 labels) plus manifest.json recording shapes, dtypes,
seeds and file names. Raw files carry no header; the manifest is the
source of truth for reading them back.
"""
from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from ..errors import MissingInputError
from .compose import SplitArrays

_DTYPES = {"images": "<f4", "masks": "u1", "labels": "<i8"}


def write_split(out_dir: Path, name: str, split: SplitArrays) -> dict:
    """Write one split's arrays; returns its manifest entry."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entry: dict = {}
    for kind, arr in (("images", split.images), ("masks", split.masks), ("labels", split.labels)):
        fname = f"{name}_{kind}.bin"
        arr.astype(_DTYPES[kind]).tofile(out_dir / fname)
        entry[kind] = {"file": fname, "shape": list(arr.shape), "dtype": _DTYPES[kind]}
    return entry


def write_manifest(out_dir: Path, dataset: str, seed: int, splits: dict, extra: dict | None = None):
    """Atomically write manifest.json describing the dataset directory."""
    manifest = {"dataset": dataset, "seed": seed, "splits": splits}
    if extra:
        manifest.update(extra)
    path = Path(out_dir) / "manifest.json"
    tmp = path.with_suffix(".json.tmp")
    tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    os.replace(tmp, path)


def read_manifest(data_dir: Path) -> dict:
    path = Path(data_dir) / "manifest.json"
    if not path.exists():
        raise MissingInputError(f"no manifest.json in {data_dir}")
    return json.loads(path.read_text())


def load_split(data_dir: Path, name: str) -> SplitArrays:
    """Load one split back into memory, validating against the manifest."""
    data_dir = Path(data_dir)
    manifest = read_manifest(data_dir)
    if name not in manifest["splits"]:
        raise MissingInputError(f"split '{name}' not in {data_dir} (have {sorted(manifest['splits'])})")
    entry = manifest["splits"][name]
    arrays = {}
    for kind in ("images", "masks", "labels"):
        meta = entry[kind]
        path = data_dir / meta["file"]
        if not path.exists():
            raise MissingInputError(f"missing data file {path}")
        arr = np.fromfile(path, dtype=np.dtype(meta["dtype"]))
        arrays[kind] = arr.reshape(meta["shape"])
    return SplitArrays(images=arrays["images"], masks=arrays["masks"], labels=arrays["labels"])
