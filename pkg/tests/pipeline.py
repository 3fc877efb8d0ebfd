"""Builds and caches every artifact the acceptance suite needs.

Long-running pieces (training cohorts, sweeps) are cached under a work
directory and skipped when already complete, so the suite is expensive
exactly once per environment. Run ahead of time with:

    python tests/pipeline.py all

Scales (GASPNET_ACCEPT_DIR overrides the cache location):
  - source corpora and composed datasets are synthetic stand-ins written
    in the real IDX/CIFAR binary formats (no real datasets ship with the
    sandbox);
  - the anchor run uses the pinned 10k-sample/5-epoch recipe;
  - the direction cohorts (noise/ablation/scale) pin seed counts, with
    training scale sized for a single-core budget.
"""
from __future__ import annotations

import json
import os
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))

import numpy as np

from corpus import build_source_tree
from gaspnet.checkpoint import load_checkpoint
from gaspnet.config import default_config
from gaspnet.datagen import generate_dataset
from gaspnet.dataio.store import load_split
from gaspnet.evalstats import (
    SweepSpec,
    noise_sweep,
    read_metrics_csv,
    scale_sweep,
    write_metrics_csv,
)
from gaspnet.model import GaspNetConfig, ablation_config
from gaspnet.train import TrainConfig, train_model

WORK = Path(
    os.environ.get("GASPNET_ACCEPT_DIR") or Path.home() / ".cache" / "gaspnet-accept"
)

MM_CFG = GaspNetConfig(baseline_channels=(30, 34, 38))
CM_CFG = GaspNetConfig(
    in_channels=3, head_mode="dual", key_dim=16, alpha=0.8, lam=4.0,
    epsilon=-0.7, tau=1.0, omega=10.0, learn_phase_init=True,
    baseline_channels=(29, 33, 36),
)

PLAN = {
    "sources": dict(digit_train=12000, digit_test=3000, shape_train=2000, shape_test=600,
                    bg_train=6000, bg_test=1500, seed=4242),
    "mm_data": dict(train=10000, val=1000, test=3000, seed=31),
    "cm_data": dict(train=4000, val=800, test=1500, seed=32),
    "anchor": dict(seed=201, epochs=5, train_samples=10000),
    "noise_cohort": dict(seeds=(0, 1, 2), epochs=4, train_samples=4000),
    "ablation_cohort": dict(seeds=(0, 1), epochs=4, train_samples=4000),
    "scale_cohort": dict(seeds=(0, 1), epochs=4, train_samples=4000),
    "eval": dict(noise_samples=800, ablation_samples=800, scale_samples=600,
                 clean_samples=1000, batch=64),
}


def _log(msg: str) -> None:
    print(f"[pipeline +{time.strftime('%H:%M:%S')}] {msg}", flush=True)


def ensure_sources() -> Path:
    src = WORK / "sources"
    marker = src / "cifar" / "test_batch.bin"
    if not marker.exists():
        _log("building synthetic source corpora")
        p = PLAN["sources"]
        build_source_tree(
            src,
            n_digit_train=p["digit_train"], n_digit_test=p["digit_test"],
            n_shape_train=p["shape_train"], n_shape_test=p["shape_test"],
            n_bg_train=p["bg_train"], n_bg_test=p["bg_test"], seed=p["seed"],
        )
    return src


def ensure_dataset(name: str) -> Path:
    src = ensure_sources()
    plan = PLAN[f"{name}_data"]
    out = WORK / f"data_{name}"
    if not (out / "manifest.json").exists():
        _log(f"composing dataset {name}")
        cfg = default_config()
        cfg["data"].update(
            dataset="multi_mnist" if name == "mm" else "cifar_mnist",
            train_count=plan["train"], val_count=plan["val"], test_count=plan["test"],
        )
        generate_dataset(cfg["data"]["dataset"], src, out, plan["seed"], cfg)
    return out


def _run_complete(run_dir: Path, epochs: int) -> bool:
    last = run_dir / "ckpt_last.zip"
    if not last.exists():
        return False
    meta, _, _ = load_checkpoint(last)
    return meta["epoch"] >= epochs - 1


def ensure_run(
    run_dir: Path,
    model_cfg: GaspNetConfig,
    data_dir: Path,
    model_kind: str,
    seed: int,
    epochs: int,
    train_samples: int | None,
) -> Path:
    """Train (or resume) one model; returns the best checkpoint path."""
    if _run_complete(run_dir, epochs):
        return run_dir / "ckpt_best.zip"
    _log(f"training {run_dir.name} ({model_kind}, seed {seed}, {epochs} epochs)")
    train_cfg = TrainConfig(
        epochs=epochs, seed=seed, model_kind=model_kind,
        train_samples=train_samples, val_samples=500,
    )
    train = load_split(data_dir, "train")
    val = load_split(data_dir, "val")

    def progress(epoch, tr, vl):
        _log(f"  {run_dir.name} epoch {epoch}: train {tr['loss']:.3f}/{tr['accuracy']:.3f} "
             f"val {vl['loss']:.3f}/{vl['accuracy']:.3f} ({tr['wall_seconds']:.0f}s)")

    train_model(model_cfg, train_cfg, train, val, run_dir, resume=True, progress=progress)
    return run_dir / "ckpt_best.zip"


def ensure_anchor() -> Path:
    data = ensure_dataset("mm")
    p = PLAN["anchor"]
    return ensure_run(WORK / "ckpt_mm" / f"anchor_seed{p['seed']}", MM_CFG, data,
                      "gaspnet", p["seed"], p["epochs"], p["train_samples"])


def ensure_noise_cohort() -> dict[str, dict[int, Path]]:
    data = ensure_dataset("mm")
    p = PLAN["noise_cohort"]
    out: dict[str, dict[int, Path]] = {"gaspnet": {}, "baseline": {}}
    for kind in ("gaspnet", "baseline"):
        for seed in p["seeds"]:
            run = WORK / "ckpt_mm" / f"{kind}_seed{seed}"
            out[kind][seed] = ensure_run(run, MM_CFG, data, kind, seed,
                                         p["epochs"], p["train_samples"])
    return out


def ensure_ablation_cohort() -> dict[str, dict[int, Path]]:
    data = ensure_dataset("mm")
    p = PLAN["ablation_cohort"]
    out: dict[str, dict[int, Path]] = {}
    for which in ("alpha", "omega", "coupling"):
        cfg = ablation_config(MM_CFG, which)
        out[f"ablation_{which}"] = {}
        for seed in p["seeds"]:
            run = WORK / "ckpt_mm" / f"ablation_{which}_seed{seed}"
            out[f"ablation_{which}"][seed] = ensure_run(
                run, cfg, data, "gaspnet", seed, p["epochs"], p["train_samples"])
    return out


def ensure_scale_cohort() -> dict[str, dict[int, Path]]:
    data = ensure_dataset("cm")
    p = PLAN["scale_cohort"]
    out: dict[str, dict[int, Path]] = {"gaspnet": {}, "baseline": {}}
    for kind in ("gaspnet", "baseline"):
        for seed in p["seeds"]:
            run = WORK / "ckpt_cm" / f"{kind}_seed{seed}"
            out[kind][seed] = ensure_run(run, CM_CFG, data, kind, seed,
                                         p["epochs"], p["train_samples"])
    return out


def _cached_rows(path: Path, build):
    if path.exists():
        return read_metrics_csv(path)
    rows = build()
    path.parent.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(rows, path)
    return rows


def ensure_noise_metrics() -> Path:
    path = WORK / "eval_noise" / "metrics.csv"
    if not path.exists():
        ckpts = ensure_noise_cohort()
        test = load_split(ensure_dataset("mm"), "test")
        spec = SweepSpec(experiment="noise", samples=PLAN["eval"]["noise_samples"],
                         batch_size=PLAN["eval"]["batch"])
        _log("noise sweep over the trained cohort")
        _cached_rows(path, lambda: noise_sweep(ckpts, test, spec))
    return path


def ensure_ablation_metrics() -> Path:
    path = WORK / "eval_ablation" / "metrics.csv"
    if not path.exists():
        ablations = ensure_ablation_cohort()
        full = ensure_noise_cohort()["gaspnet"]
        keep = {s: full[s] for s in PLAN["ablation_cohort"]["seeds"]}
        ckpts = {"gaspnet": keep, **ablations}
        test = load_split(ensure_dataset("mm"), "test")
        spec = SweepSpec(
            experiment="ablation", kinds=("gaussian",), levels=(0.45,),
            samples=PLAN["eval"]["ablation_samples"], batch_size=PLAN["eval"]["batch"],
            include_control=False,
        )
        _log("ablation sweep at gaussian 0.45")
        _cached_rows(path, lambda: noise_sweep(ckpts, test, spec))
    return path


def ensure_scale_metrics() -> Path:
    path = WORK / "eval_scale" / "metrics.csv"
    if not path.exists():
        ckpts = ensure_scale_cohort()
        data = ensure_dataset("cm")
        splits = {28: load_split(data, "test")}
        for size in (24, 20, 17, 14):
            splits[size] = load_split(data, f"test_s{size}")
        spec = SweepSpec(experiment="scale", dataset="cifar_mnist",
                         samples=PLAN["eval"]["scale_samples"],
                         batch_size=PLAN["eval"]["batch"])
        _log("scale sweep over item sizes")
        _cached_rows(path, lambda: scale_sweep(ckpts, splits, spec))
    return path


def ensure_anchor_metrics() -> Path:
    """Clean test accuracy of the pinned-recipe anchor run."""
    path = WORK / "eval_anchor" / "metrics.csv"
    if not path.exists():
        anchor = ensure_anchor()
        test = load_split(ensure_dataset("mm"), "test")
        # control-only sweep = clean accuracy at every timestep
        spec = SweepSpec(experiment="anchor", kinds=("gaussian",), levels=(0.0,),
                         samples=PLAN["eval"]["clean_samples"],
                         batch_size=PLAN["eval"]["batch"], include_control=False)
        _log("anchor clean evaluation")
        _cached_rows(path, lambda: noise_sweep({"gaspnet": {PLAN['anchor']['seed']: anchor}},
                                               test, spec))
    return path


def ensure_all() -> dict[str, Path]:
    return {
        "mm_data": ensure_dataset("mm"),
        "cm_data": ensure_dataset("cm"),
        "noise_metrics": ensure_noise_metrics(),
        "ablation_metrics": ensure_ablation_metrics(),
        "scale_metrics": ensure_scale_metrics(),
        "anchor_metrics": ensure_anchor_metrics(),
        "sources": ensure_sources(),
    }


if __name__ == "__main__":
    stage = sys.argv[1] if len(sys.argv) > 1 else "all"
    WORK.mkdir(parents=True, exist_ok=True)
    steps = {
        "sources": ensure_sources,
        "data": lambda: (ensure_dataset("mm"), ensure_dataset("cm")),
        "noise": ensure_noise_metrics,
        "ablation": ensure_ablation_metrics,
        "scale": ensure_scale_metrics,
        "anchor": ensure_anchor_metrics,
        "all": ensure_all,
    }
    _log(f"stage {stage} -> {WORK}")
    result = steps[stage]()
    _log(f"done: {result}")
