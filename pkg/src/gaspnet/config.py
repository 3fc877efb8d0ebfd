"""Flat key = value run configuration (INI sections per module).

The [phase] section mirrors the published hyperparameter names (alpha,
D, lambda, kappa, epsilon, tau, omega, init, T); [data], [model],
[train] and [eval] cover dataset sizes, architecture, optimization and
sweep caps. Unknown keys are collected and reported together.
"""
from __future__ import annotations

import configparser
from pathlib import Path

from .errors import ConfigError
from .model import GaspNetConfig
from .train import TrainConfig

# section -> key -> (type tag, default)
SCHEMA: dict[str, dict[str, tuple[str, object]]] = {
    "data": {
        "dataset": ("str", "multi_mnist"),
        "data_dir": ("str", ""),
        "train_count": ("int", 50000),
        "val_count": ("int", 10000),
        "test_count": ("int", 10000),
        "blend": ("float", 0.5),
    },
    "model": {
        "conv_channels": ("ints", (26, 30, 32)),
        "baseline_channels": ("ints", (28, 32, 35)),
        "dense_units": ("int", 16),
    },
    "phase": {
        "alpha": ("float", 1.0),
        "D": ("int", 32),
        "lambda": ("float", 1.0),
        "kappa": ("float", 100.0),
        "epsilon": ("float", -0.9),
        "tau": ("float", 5.0),
        "omega": ("float", 0.5),
        "init": ("bool", False),
        "T": ("int", 6),
        "eps_theta": ("float", 1e-6),
    },
    "train": {
        "epochs": ("int", 25),
        "batch": ("int", 32),
        "lr": ("float", 5e-4),
        "weight_decay": ("float", 1e-5),
        "train_samples": ("optint", None),
        "val_samples": ("optint", None),
        "grad_clip": ("optfloat", None),
    },
    "eval": {
        "samples": ("optint", 10000),
        "batch": ("int", 64),
        "noise_seed": ("int", 777),
        "report_samples": ("int", 4),
    },
}

DATASET_KINDS = ("multi_mnist", "cifar_mnist", "cifar_fashion")


def _convert(section: str, key: str, raw: str, tag: str):
    raw = raw.strip()
    try:
        if tag == "str":
            return raw
        if tag == "int":
            return int(raw)
        if tag == "float":
            return float(raw)
        if tag == "bool":
            low = raw.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if tag == "ints":
            return tuple(int(v) for v in raw.replace(",", " ").split())
        if tag in ("optint", "optfloat"):
            if raw == "" or raw.lower() == "none":
                return None
            return int(raw) if tag == "optint" else float(raw)
    except ValueError:
        raise ConfigError(f"bad value for [{section}] {key}: {raw!r}") from None
    raise ConfigError(f"unknown schema tag {tag}")


def default_config() -> dict[str, dict[str, object]]:
    return {sec: {k: v for k, (_, v) in keys.items()} for sec, keys in SCHEMA.items()}


def load_config(path: Path | None) -> dict[str, dict[str, object]]:
    """Parse an INI file over the defaults; unknown sections/keys all reported."""
    cfg = default_config()
    if path is None:
        return cfg
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    parser = configparser.ConfigParser()
    parser.optionxform = str  # preserve case (D, T)
    parser.read(path)
    bad: list[str] = []
    for section in parser.sections():
        if section not in SCHEMA:
            bad.extend(f"[{section}] {k}" for k in parser[section])
            continue
        for key, raw in parser[section].items():
            if key not in SCHEMA[section]:
                bad.append(f"[{section}] {key}")
                continue
            cfg[section][key] = _convert(section, key, raw, SCHEMA[section][key][0])
    if bad:
        raise ConfigError("unknown config keys: " + ", ".join(sorted(bad)))
    dataset = cfg["data"]["dataset"]
    if dataset not in DATASET_KINDS:
        raise ConfigError(f"[data] dataset must be one of {DATASET_KINDS}, got {dataset!r}")
    return cfg


def resolved_snapshot(cfg: dict) -> dict[str, object]:
    """Flat 'section.key' view for manifests and config echoes."""
    flat = {}
    for section, keys in cfg.items():
        for key, value in keys.items():
            flat[f"{section}.{key}"] = list(value) if isinstance(value, tuple) else value
    return flat


def model_config(cfg: dict) -> GaspNetConfig:
    dataset = cfg["data"]["dataset"]
    overlay = dataset != "multi_mnist"
    phase = cfg["phase"]
    return GaspNetConfig(
        in_channels=3 if overlay else 1,
        conv_channels=tuple(cfg["model"]["conv_channels"]),
        dense_units=cfg["model"]["dense_units"],
        head_mode="dual" if overlay else "single",
        key_dim=phase["D"],
        alpha=phase["alpha"],
        lam=phase["lambda"],
        kappa_dense=phase["kappa"],
        epsilon=phase["epsilon"],
        tau=phase["tau"],
        eps_theta=phase["eps_theta"],
        omega=phase["omega"],
        timesteps=phase["T"],
        learn_phase_init=phase["init"],
        baseline_channels=tuple(cfg["model"]["baseline_channels"]),
    )


def train_config(cfg: dict, model_kind: str, seed: int) -> TrainConfig:
    t = cfg["train"]
    return TrainConfig(
        epochs=t["epochs"],
        batch_size=t["batch"],
        lr=t["lr"],
        weight_decay=t["weight_decay"],
        seed=seed,
        model_kind=model_kind,
        grad_clip=t["grad_clip"],
        train_samples=t["train_samples"],
        val_samples=t["val_samples"],
    )
