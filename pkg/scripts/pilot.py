"""Tiny end-to-end pilot: data -> short training -> noise eval table.

Sizing probe for the acceptance cohorts; not part of the test suite.
Usage: python scripts/pilot.py WORKDIR [train_count] [epochs]
"""
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

import numpy as np
import torch
from corpus import build_source_tree

from gaspnet.config import default_config
from gaspnet.datagen import generate_dataset
from gaspnet.dataio.store import load_split
from gaspnet.evalstats import SweepSpec, noise_sweep
from gaspnet.model import GaspNetConfig
from gaspnet.train import TrainConfig, train_model

work = Path(sys.argv[1])
train_count = int(sys.argv[2]) if len(sys.argv) > 2 else 1500
epochs = int(sys.argv[3]) if len(sys.argv) > 3 else 2
work.mkdir(parents=True, exist_ok=True)

t0 = time.time()
src = work / "src"
if not (src / "mnist" / "train-images-idx3-ubyte").exists():
    build_source_tree(src, n_digit_train=3000, n_digit_test=800, n_shape_train=50,
                      n_shape_test=50, n_bg_train=50, n_bg_test=50, seed=42)
print(f"[{time.time()-t0:.0f}s] sources ready", flush=True)

data_dir = work / "data"
cfg = default_config()
cfg["data"].update(dataset="multi_mnist", train_count=train_count, val_count=300, test_count=600)
if not (data_dir / "manifest.json").exists():
    generate_dataset("multi_mnist", src, data_dir, seed=11, cfg=cfg)
print(f"[{time.time()-t0:.0f}s] dataset ready", flush=True)

model_cfg = GaspNetConfig(baseline_channels=(30, 34, 38))
train_split = load_split(data_dir, "train")
val_split = load_split(data_dir, "val")

for kind in ("gaspnet", "baseline"):
    out = work / "ckpts" / f"{kind}_seed0"
    if (out / "ckpt_best.zip").exists():
        continue
    tc = TrainConfig(epochs=epochs, seed=0, model_kind=kind, val_samples=300)
    def progress(epoch, tr, vl, kind=kind):
        print(f"[{time.time()-t0:.0f}s] {kind} epoch {epoch}: train {tr['loss']:.3f}/{tr['accuracy']:.3f} "
              f"val {vl['loss']:.3f}/{vl['accuracy']:.3f}", flush=True)
    train_model(model_cfg, tc, train_split, val_split, out, progress=progress)

print(f"[{time.time()-t0:.0f}s] training done", flush=True)

test_split = load_split(data_dir, "test")
spec = SweepSpec(experiment="noise", dataset="multi_mnist", samples=400,
                 levels=(0.45, 0.6))
ckpts = {
    "gaspnet": {0: work / "ckpts" / "gaspnet_seed0" / "ckpt_best.zip"},
    "baseline": {0: work / "ckpts" / "baseline_seed0" / "ckpt_best.zip"},
}
rows = noise_sweep(ckpts, test_split, spec)
print(f"[{time.time()-t0:.0f}s] eval done; exact-match accuracy:", flush=True)
print(f"{'experiment':<16}{'level':>6}{'model':<10}  t0 .. t5")
for model in ("gaspnet", "baseline"):
    for exp in ("noise_gaussian", "noise_sp"):
        for level in sorted({r.condition_level for r in rows if r.experiment == exp}):
            vals = [r.value for r in sorted(
                (r for r in rows if r.model == model and r.experiment == exp
                 and r.condition_level == level and r.metric_name == "exact_match"),
                key=lambda r: r.timestep)]
            print(f"{exp:<16}{level:>6}  {model:<10}" + " ".join(f"{v:.3f}" for v in vals), flush=True)
