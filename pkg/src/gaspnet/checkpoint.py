"""Checkpoint archive: a zip of shape-tagged little-endian float32 arrays
(one .npy per named parameter, optimizer moments under adam.m./adam.v.)
plus a meta.json record (config, seed, epoch, code version).
"""
from __future__ import annotations

import io
import json
import zipfile
from dataclasses import asdict
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .errors import MissingInputError
from .model import Baseline, GaspNet, GaspNetConfig


def save_checkpoint(
    path: Path,
    model: torch.nn.Module,
    meta: dict,
    adam_state: dict | None = None,
) -> None:
    """Write atomically (tmp + rename); arrays stored as little-endian float32."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    meta = dict(meta, version=__version__)
    with zipfile.ZipFile(tmp, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        for name, p in model.named_parameters():
            _write_array(zf, f"params/{name}.npy", p.detach().numpy())
        if adam_state is not None:
            for name, m in adam_state["m"].items():
                _write_array(zf, f"adam.m/{name}.npy", m.numpy())
            for name, v in adam_state["v"].items():
                _write_array(zf, f"adam.v/{name}.npy", v.numpy())
            meta["adam_step"] = adam_state["step"]
        zf.writestr("meta.json", json.dumps(meta, indent=2, sort_keys=True))
    tmp.replace(path)


def _write_array(zf: zipfile.ZipFile, name: str, arr: np.ndarray) -> None:
    buf = io.BytesIO()
    np.save(buf, arr.astype("<f4"))
    zf.writestr(name, buf.getvalue())


def load_checkpoint(path: Path) -> tuple[dict, dict[str, np.ndarray], dict | None]:
    """Returns (meta, param arrays, adam state or None)."""
    path = Path(path)
    if not path.exists():
        raise MissingInputError(f"checkpoint {path} does not exist")
    params: dict[str, np.ndarray] = {}
    adam_m: dict[str, np.ndarray] = {}
    adam_v: dict[str, np.ndarray] = {}
    with zipfile.ZipFile(path) as zf:
        meta = json.loads(zf.read("meta.json"))
        for info in zf.infolist():
            if not info.filename.endswith(".npy"):
                continue
            arr = np.load(io.BytesIO(zf.read(info.filename)))
            group, name = info.filename.split("/", 1)
            name = name[: -len(".npy")]
            if group == "params":
                params[name] = arr
            elif group == "adam.m":
                adam_m[name] = arr
            elif group == "adam.v":
                adam_v[name] = arr
    adam = None
    if adam_m:
        adam = {
            "step": meta.get("adam_step", 0),
            "m": {k: torch.from_numpy(v.copy()) for k, v in adam_m.items()},
            "v": {k: torch.from_numpy(v.copy()) for k, v in adam_v.items()},
        }
    return meta, params, adam


def config_from_meta(meta: dict) -> GaspNetConfig:
    fields = dict(meta["model_config"])
    for key in ("conv_channels", "baseline_channels"):
        fields[key] = tuple(fields[key])
    return GaspNetConfig(**fields)


def restore_model(path: Path) -> tuple[torch.nn.Module, dict]:
    """Rebuild the model recorded in a checkpoint and load its parameters."""
    meta, params, _ = load_checkpoint(path)
    cfg = config_from_meta(meta)
    if meta["model_kind"] == "gaspnet":
        model: torch.nn.Module = GaspNet(cfg, seed=meta.get("seed", 0))
    else:
        model = Baseline(cfg, seed=meta.get("seed", 0))
    state = {k: torch.from_numpy(v.copy()) for k, v in params.items()}
    model.load_state_dict(state)
    model.eval()
    return model, meta


def meta_for(model_kind: str, cfg: GaspNetConfig, seed: int, epoch: int, **extra) -> dict:
    return {
        "model_kind": model_kind,
        "model_config": asdict(cfg),
        "seed": seed,
        "epoch": epoch,
        **extra,
    }
