"""Command-line entry point: gen-data, train, eval, report.

Exit codes: 0 success, 2 usage/config error, 3 missing input,
4 runtime numerical failure. GASPNET_THREADS caps torch's thread count.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import __version__
from .config import load_config, model_config, resolved_snapshot, train_config
from .errors import ConfigError, GaspnetError, MissingInputError, NumericalError
from .manifest import RunManifest

ABLATIONS = ("alpha", "omega", "coupling")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gaspnet", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="compose a dataset directory from source files")
    p.add_argument("--dataset", required=True, choices=("multi_mnist", "cifar_mnist", "cifar_fashion"))
    p.add_argument("--src", required=True, type=Path, help="directory with mnist/fashion/cifar sources")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--config", type=Path, default=None)

    p = sub.add_parser("train", help="train one model on a generated dataset")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--model", required=True, choices=("gaspnet", "baseline"))
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--data", type=Path, default=None, help="dataset dir (default: config data.data_dir)")
    p.add_argument("--resume", action="store_true", help="continue from ckpt_last.zip if present")
    p.add_argument("--ablation", choices=ABLATIONS, default=None,
                   help="train an ablated variant of the phase model")

    p = sub.add_parser("eval", help="run an experiment sweep over trained checkpoints")
    p.add_argument("--experiment", required=True, choices=("noise", "overlay", "scale", "ablation"))
    p.add_argument("--ckpt-dir", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--data", type=Path, default=None)
    p.add_argument("--config", type=Path, default=None)
    p.add_argument("--paper-scale", action="store_true",
                   help="full test set; overlay stats use best-of-5 vs 10 baselines")
    p.add_argument("--samples", type=int, default=None, help="override eval sample cap")

    p = sub.add_parser("report", help="render plots (and phase maps) from metrics.csv")
    p.add_argument("--metrics", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--ckpt", type=Path, default=None, help="checkpoint for phase-map export")
    p.add_argument("--data", type=Path, default=None, help="dataset dir for phase-map export")
    p.add_argument("--samples", type=int, default=4, help="samples in the phase-map batch")
    return parser


def cmd_gen_data(args) -> int:
    from .datagen import generate_dataset

    cfg = load_config(args.config)
    manifest = RunManifest(
        "gen-data", args.out, args.config, resolved_snapshot(cfg), seeds=[args.seed]
    )
    splits = generate_dataset(args.dataset, args.src, args.out, args.seed, cfg)
    for entry in splits.values():
        for meta in entry.values():
            manifest.add_artifact(args.out / meta["file"])
    manifest.write()
    print(f"gen-data: wrote {len(splits)} splits to {args.out}")
    return 0


def _dataset_dir(args, cfg) -> Path:
    data_dir = args.data or (Path(cfg["data"]["data_dir"]) if cfg["data"]["data_dir"] else None)
    if data_dir is None:
        raise ConfigError("no dataset directory: pass --data or set [data] data_dir")
    if not Path(data_dir).exists():
        raise MissingInputError(f"dataset directory {data_dir} does not exist")
    return Path(data_dir)


def cmd_train(args) -> int:
    from .dataio.store import load_split
    from .model import ablation_config
    from .train import train_model

    cfg = load_config(args.config)
    data_dir = _dataset_dir(args, cfg)
    m_cfg = model_config(cfg)
    model_kind = args.model
    run_name = model_kind
    if args.ablation:
        if model_kind != "gaspnet":
            raise ConfigError("--ablation applies to the phase model only")
        m_cfg = ablation_config(m_cfg, args.ablation)
        run_name = f"ablation_{args.ablation}"
    t_cfg = train_config(cfg, model_kind, args.seed)

    run_dir = Path(args.out) / f"{run_name}_seed{args.seed}"
    resolved = resolved_snapshot(cfg)
    print(f"train: {run_name} seed {args.seed} on {cfg['data']['dataset']} "
          f"({t_cfg.epochs} epochs, batch {t_cfg.batch_size})")
    for key in ("phase.alpha", "phase.D", "phase.lambda", "phase.kappa", "phase.epsilon",
                "phase.tau", "phase.omega", "phase.init", "phase.T"):
        print(f"  {key} = {resolved[key]}")
    manifest = RunManifest("train", run_dir, args.config, resolved, seeds=[args.seed])

    train_split = load_split(data_dir, "train")
    val_split = load_split(data_dir, "val")

    def progress(epoch, row_train, row_val):
        print(
            f"  epoch {epoch}: train loss {row_train['loss']:.4f} acc {row_train['accuracy']:.3f} "
            f"| val loss {row_val['loss']:.4f} acc {row_val['accuracy']:.3f} "
            f"({row_train['wall_seconds']:.0f}s)",
            flush=True,
        )

    result = train_model(m_cfg, t_cfg, train_split, val_split, run_dir,
                         resume=args.resume, progress=progress)
    for path in (result.best_checkpoint, result.last_checkpoint, result.log_path):
        manifest.add_artifact(path)
    manifest.write()
    print(f"train: best val accuracy {result.best_val_accuracy:.4f} -> {result.best_checkpoint}")
    return 0


def _spec_for(args, cfg, experiment: str, dataset: str):
    from .evalstats import SweepSpec

    samples = cfg["eval"]["samples"]
    if args.paper_scale:
        samples = None
    if args.samples is not None:
        samples = args.samples
    return SweepSpec(
        experiment=experiment,
        dataset=dataset,
        samples=samples,
        batch_size=cfg["eval"]["batch"],
        noise_seed=cfg["eval"]["noise_seed"],
    )


def _require_checkpoints(ckpt_dir: Path, names: list[str], minimum: int = 1) -> dict:
    from .evalstats import discover_checkpoints

    found = {}
    missing = []
    for name in names:
        ck = discover_checkpoints(ckpt_dir, name)
        if len(ck) >= minimum:
            found[name] = ck
        else:
            missing.append(f"{name} (found {len(ck)}, need >= {minimum})")
    if missing:
        raise MissingInputError(
            f"missing checkpoints under {ckpt_dir}: " + "; ".join(missing)
        )
    return found


def cmd_eval(args) -> int:
    from .dataio.store import load_split, read_manifest
    from .evalstats import (
        compare_models,
        noise_sweep,
        overlay_sweep,
        scale_sweep,
        write_metrics_csv,
        write_stats_csv,
    )

    cfg = load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data_dir = _dataset_dir(args, cfg)
    dataset = read_manifest(data_dir)["dataset"]
    manifest = RunManifest("eval", out, args.config, resolved_snapshot(cfg))

    rows = []
    stats = []
    if args.experiment == "noise":
        ckpts = _require_checkpoints(args.ckpt_dir, ["gaspnet", "baseline"])
        spec = _spec_for(args, cfg, "noise", dataset)
        rows = noise_sweep(ckpts, load_split(data_dir, "test"), spec)
        stats = compare_models(rows)
    elif args.experiment == "overlay":
        ckpts = _require_checkpoints(args.ckpt_dir, ["gaspnet", "baseline"])
        if args.paper_scale:
            from .evalstats import select_best_checkpoint

            ckpts["gaspnet"] = select_best_checkpoint(ckpts["gaspnet"])
        spec = _spec_for(args, cfg, "overlay", dataset)
        rows = overlay_sweep(ckpts, load_split(data_dir, "test"), spec)
        stats = compare_models(rows)
    elif args.experiment == "scale":
        ckpts = _require_checkpoints(args.ckpt_dir, ["gaspnet", "baseline"])
        if args.paper_scale:
            from .evalstats import select_best_checkpoint

            ckpts["gaspnet"] = select_best_checkpoint(ckpts["gaspnet"])
        spec = _spec_for(args, cfg, "scale", dataset)
        splits = {28: load_split(data_dir, "test")}
        for size in (24, 20, 17, 14):
            splits[size] = load_split(data_dir, f"test_s{size}")
        rows = scale_sweep(ckpts, splits, spec)
        stats = compare_models(rows)
    elif args.experiment == "ablation":
        names = [f"ablation_{w}" for w in ABLATIONS]
        ckpts = _require_checkpoints(args.ckpt_dir, ["gaspnet", *names])
        spec = _spec_for(args, cfg, "ablation", dataset)
        rows = noise_sweep(ckpts, load_split(data_dir, "test"), spec)
        stats = []
        for name in names:
            # stats compare the full model against each ablated variant;
            # the mean_baseline column holds the ablation's mean.
            stats.extend(compare_models(rows, model_a="gaspnet", model_b=name))

    metrics_path = out / "metrics.csv"
    write_metrics_csv(rows, metrics_path)
    manifest.add_artifact(metrics_path)
    if stats:
        stats_path = out / "stats.csv"
        write_stats_csv(stats, stats_path)
        manifest.add_artifact(stats_path)
    else:
        print("eval: single-model input, no stats emitted")
    manifest.write()
    print(f"eval: wrote {len(rows)} metric rows to {metrics_path}")
    return 0


def cmd_report(args) -> int:
    from .report import render_accuracy_plots, render_phase_maps

    out = Path(args.out)
    manifest = RunManifest("report", out, None, {})
    written = render_accuracy_plots(args.metrics, out)
    if args.ckpt is not None and args.data is not None:
        written += render_phase_maps(args.ckpt, args.data, out / "phase_maps", args.samples)
    elif args.ckpt is not None or args.data is not None:
        raise ConfigError("phase maps need both --ckpt and --data")
    for path in written:
        manifest.add_artifact(path)
    manifest.write()
    print(f"report: wrote {len(written)} files to {out}")
    return 0


def main(argv=None) -> int:
    threads = os.environ.get("GASPNET_THREADS")
    if threads:
        import torch

        torch.set_num_threads(int(threads))
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "gen-data": cmd_gen_data,
        "train": cmd_train,
        "eval": cmd_eval,
        "report": cmd_report,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MissingInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except GaspnetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
