"""Training harness: Adam with coupled L2 decay, seeded data order and
phase initialization, per-epoch validation, checkpointing, CSV logs.

The loss is computed from the last timestep only: classification loss
plus omega times the synchrony loss on the input-resolution phase field
(GASPnet only; masks are consumed solely by that term). Baseline and
GASPnet runs draw identical shuffles for identical seeds.
"""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .checkpoint import load_checkpoint, meta_for, save_checkpoint
from .dataio.compose import SplitArrays
from .dataio.rng import STREAM_SHUFFLE, rng_for
from .errors import ConfigError, NumericalError
from .model import Baseline, GaspNet, GaspNetConfig, build_baseline, build_gaspnet, run_episode
from .objectives import (
    exact_match_accuracy,
    head_accuracy,
    head_cross_entropy,
    mask_groups,
    synchrony_loss,
    total_loss,
    two_hot_cross_entropy,
)

LOG_COLUMNS = ("epoch", "split", "loss", "accuracy", "wall_seconds")


@dataclass
class TrainConfig:
    epochs: int = 25
    batch_size: int = 32
    lr: float = 5e-4
    weight_decay: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    model_kind: str = "gaspnet"  # or "baseline"
    grad_clip: float | None = None  # off by default; for diagnosing phase gradients
    train_samples: int | None = None  # cap on samples per epoch
    val_samples: int | None = None

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch size must be positive")
        if self.model_kind not in ("gaspnet", "baseline"):
            raise ConfigError(f"model_kind must be gaspnet|baseline, got {self.model_kind!r}")


@dataclass
class RngHandles:
    """Derived generators so one seed pins init, shuffling, and phase draws."""

    seed: int
    torch_gen: torch.Generator


def seed_everything(seed: int) -> RngHandles:
    torch.manual_seed(seed)
    gen = torch.Generator().manual_seed(seed)
    return RngHandles(seed=seed, torch_gen=gen)


def adam_init(params: dict[str, torch.Tensor]) -> dict:
    return {
        "step": 0,
        "m": {k: torch.zeros_like(p) for k, p in params.items()},
        "v": {k: torch.zeros_like(p) for k, p in params.items()},
    }


def adam_step(
    params: dict[str, torch.Tensor],
    grads: dict[str, torch.Tensor],
    state: dict,
    lr: float,
    weight_decay: float = 0.0,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> None:
    """One in-place Adam update with bias correction and coupled L2 decay."""
    beta1, beta2 = betas
    state["step"] += 1
    t = state["step"]
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    with torch.no_grad():
        for name, p in params.items():
            g = grads[name]
            if weight_decay:
                g = g + weight_decay * p
            m = state["m"][name].mul_(beta1).add_(g, alpha=1.0 - beta1)
            v = state["v"][name].mul_(beta2).addcmul_(g, g, value=1.0 - beta2)
            p.sub_(lr * (m / bc1) / ((v / bc2).sqrt() + eps))


def _to_tensors(split: SplitArrays):
    return (
        torch.from_numpy(np.ascontiguousarray(split.images)),
        torch.from_numpy(np.ascontiguousarray(split.masks.astype(np.int64))),
        torch.from_numpy(np.ascontiguousarray(split.labels)),
    )


def _classification_loss(model_cfg: GaspNetConfig, logits_last, labels):
    if model_cfg.head_mode == "single":
        return two_hot_cross_entropy(logits_last["digits"], labels)
    per_head = {"cifar": labels[:, 0], "item": labels[:, 1]}
    return head_cross_entropy(logits_last, per_head)


def _batch_accuracy(model_cfg: GaspNetConfig, logits_last, labels) -> float:
    if model_cfg.head_mode == "single":
        return exact_match_accuracy(logits_last["digits"], labels).mean().item()
    accs = head_accuracy(logits_last, {"cifar": labels[:, 0], "item": labels[:, 1]})
    return float(np.mean([a.mean().item() for a in accs.values()]))


def evaluate_split(
    model, model_cfg: GaspNetConfig, images, masks, labels, batch_size=64, phase_seed=0, limit=None
) -> tuple[float, float]:
    """(loss, accuracy) at the last timestep over a split (or its first `limit` samples)."""
    n = images.shape[0] if limit is None else min(limit, images.shape[0])
    losses, accs, counted = [], [], 0
    model.eval()
    with torch.no_grad():
        for start in range(0, n, batch_size):
            stop = min(start + batch_size, n)
            x = images[start:stop]
            y = labels[start:stop]
            trace = run_episode(model, x, phase_seed=phase_seed, sample_ids=range(start, stop))
            last = {h: l[-1] for h, l in trace.logits.items()}
            loss = _classification_loss(model_cfg, last, y)
            if isinstance(model, GaspNet) and model_cfg.omega:
                sl = model_cfg.image_size
                groups = mask_groups(masks[start:stop])
                phi_in = trace.phases[-1][:, : sl * sl]
                loss = total_loss(loss, synchrony_loss(phi_in, groups), model_cfg.omega)
            losses.append(loss.item() * (stop - start))
            accs.append(_batch_accuracy(model_cfg, last, y) * (stop - start))
            counted += stop - start
    model.train()
    return sum(losses) / counted, sum(accs) / counted


@dataclass
class TrainResult:
    best_checkpoint: Path
    last_checkpoint: Path
    log_path: Path
    best_val_accuracy: float
    log_rows: list = field(default_factory=list)


def train_model(
    model_cfg: GaspNetConfig,
    train_cfg: TrainConfig,
    train_split: SplitArrays,
    val_split: SplitArrays,
    out_dir: Path,
    resume: bool = False,
    progress=None,
) -> TrainResult:
    """Optimize one model; writes ckpt_best.zip / ckpt_last.zip and train_log.csv."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    best_path = out_dir / "ckpt_best.zip"
    last_path = out_dir / "ckpt_last.zip"
    log_path = out_dir / "train_log.csv"

    seed_everything(train_cfg.seed)
    if train_cfg.model_kind == "gaspnet":
        model: torch.nn.Module = build_gaspnet(model_cfg, train_cfg.seed)
    else:
        model = build_baseline(model_cfg, train_cfg.seed)
    params = dict(model.named_parameters())
    adam = adam_init(params)

    start_epoch = 0
    best_acc = -1.0
    log_rows: list[dict] = []
    if resume and last_path.exists():
        meta, arrays, saved_adam = load_checkpoint(last_path)
        model.load_state_dict({k: torch.from_numpy(v.copy()) for k, v in arrays.items()})
        if saved_adam is not None:
            adam = saved_adam
        start_epoch = meta["epoch"] + 1
        best_acc = meta.get("best_val_accuracy", -1.0)

    images, masks, labels = _to_tensors(train_split)
    val_images, val_masks, val_labels = _to_tensors(val_split)
    n_train = images.shape[0]
    if train_cfg.train_samples is not None:
        n_train = min(n_train, train_cfg.train_samples)

    sl = model_cfg.image_size
    model.train()
    mode = "a" if start_epoch > 0 and log_path.exists() else "w"
    with open(log_path, mode, newline="") as log_file:
        writer = csv.writer(log_file)
        if mode == "w":
            writer.writerow(LOG_COLUMNS)
        for epoch in range(start_epoch, train_cfg.epochs):
            t0 = time.time()
            order = rng_for(STREAM_SHUFFLE, train_cfg.seed, epoch).permutation(n_train)
            epoch_loss, epoch_acc, seen = 0.0, 0.0, 0
            for bstart in range(0, n_train, train_cfg.batch_size):
                idx = order[bstart : bstart + train_cfg.batch_size]
                x = images[idx]
                y = labels[idx]
                sample_ids = [(epoch << 24) | int(i) for i in idx]
                trace = run_episode(
                    model, x, phase_seed=train_cfg.seed, sample_ids=sample_ids
                )
                last = {h: l[-1] for h, l in trace.logits.items()}
                loss = _classification_loss(model_cfg, last, y)
                if isinstance(model, GaspNet) and model_cfg.omega:
                    groups = mask_groups(masks[idx])
                    phi_in = trace.phases[-1][:, : sl * sl]
                    loss = total_loss(loss, synchrony_loss(phi_in, groups), model_cfg.omega)
                if not torch.isfinite(loss):
                    raise NumericalError(
                        f"non-finite loss at epoch {epoch} batch {bstart // train_cfg.batch_size} "
                        f"(seed {train_cfg.seed}, first sample index {int(idx[0])})"
                    )
                for p in params.values():
                    p.grad = None
                loss.backward()
                if train_cfg.grad_clip is not None:
                    torch.nn.utils.clip_grad_norm_(params.values(), train_cfg.grad_clip)
                grads = {k: p.grad for k, p in params.items()}
                adam_step(
                    params,
                    grads,
                    adam,
                    train_cfg.lr,
                    train_cfg.weight_decay,
                    (train_cfg.beta1, train_cfg.beta2),
                    train_cfg.adam_eps,
                )
                bs = len(idx)
                epoch_loss += loss.item() * bs
                epoch_acc += _batch_accuracy(model_cfg, last, y) * bs
                seen += bs

            val_loss, val_acc = evaluate_split(
                model,
                model_cfg,
                val_images,
                val_masks,
                val_labels,
                batch_size=max(train_cfg.batch_size, 64),
                phase_seed=train_cfg.seed,
                limit=train_cfg.val_samples,
            )
            wall = time.time() - t0
            row_train = dict(
                epoch=epoch, split="train", loss=epoch_loss / seen, accuracy=epoch_acc / seen, wall_seconds=wall
            )
            row_val = dict(epoch=epoch, split="val", loss=val_loss, accuracy=val_acc, wall_seconds=wall)
            for row in (row_train, row_val):
                writer.writerow([row[c] for c in LOG_COLUMNS])
                log_rows.append(row)
            log_file.flush()

            if val_acc > best_acc:
                best_acc = val_acc
            meta = meta_for(
                train_cfg.model_kind,
                model_cfg,
                train_cfg.seed,
                epoch,
                best_val_accuracy=best_acc,
                val_accuracy=val_acc,
                train_config={
                    "epochs": train_cfg.epochs,
                    "batch_size": train_cfg.batch_size,
                    "lr": train_cfg.lr,
                    "weight_decay": train_cfg.weight_decay,
                    "train_samples": train_cfg.train_samples,
                },
            )
            save_checkpoint(last_path, model, meta, adam)
            if val_acc >= best_acc:
                save_checkpoint(best_path, model, meta)
            if progress is not None:
                progress(epoch, row_train, row_val)

    if not best_path.exists():  # e.g. zero-epoch resume edge
        save_checkpoint(best_path, model, meta_for(train_cfg.model_kind, model_cfg, train_cfg.seed, -1))
    return TrainResult(
        best_checkpoint=best_path,
        last_checkpoint=last_path,
        log_path=log_path,
        best_val_accuracy=best_acc,
        log_rows=log_rows,
    )
