"""Evaluation sweeps (noise robustness, overlay heads, size generalization,
ablations) and the statistical comparison (Welch t-tests with
Benjamini-Yekutieli FDR correction).

Sweeps are pure functions of (checkpoints, spec, seeds): noise is drawn
from recorded sub-seeds and rows are key-sorted before writing, so
reruns reproduce identical CSV bytes.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from scipy.special import stdtr

from .checkpoint import restore_model
from .dataio.compose import SplitArrays
from .dataio.noise import add_gaussian_noise, add_salt_pepper
from .errors import ConfigError, MissingInputError
from .model import run_episode
from .objectives import exact_match_accuracy, head_accuracy, partial_match_accuracy

GAUSSIAN_LEVELS = (0.15, 0.25, 0.35, 0.45, 0.6)
SALT_PEPPER_LEVELS = (0.01, 0.03, 0.06, 0.1, 0.2)
SCALE_SIZES = (24, 20, 17, 14)

METRICS_COLUMNS = (
    "experiment", "model", "dataset", "seed", "condition_kind",
    "condition_level", "timestep", "head", "metric_name", "value",
)
STATS_COLUMNS = (
    "experiment", "condition_level", "timestep", "head",
    "mean_gaspnet", "mean_baseline", "t", "p_raw", "p_fdr", "significant",
)


@dataclass
class SweepSpec:
    """What to evaluate: conditions, sample cap, and sub-seed base."""

    experiment: str
    dataset: str = "multi_mnist"
    levels: tuple = ()             # override the paper's level lists
    kinds: tuple = ("gaussian", "salt_pepper")
    samples: int | None = None     # cap on test samples (None = all)
    batch_size: int = 64
    noise_seed: int = 777          # base entropy for fresh noise per (seed, level)
    include_control: bool = True


@dataclass
class MetricsRow:
    experiment: str
    model: str
    dataset: str
    seed: int
    condition_kind: str
    condition_level: float
    timestep: int
    head: str
    metric_name: str
    value: float

    def key(self):
        return (
            self.experiment, self.model, self.dataset, self.seed,
            self.condition_kind, self.condition_level, self.timestep,
            self.head, self.metric_name,
        )


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.10g}"
    return str(x)


def write_metrics_csv(rows: list[MetricsRow], path: Path) -> None:
    rows = sorted(rows, key=MetricsRow.key)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_COLUMNS)
        for r in rows:
            writer.writerow([_fmt(getattr(r, c)) for c in METRICS_COLUMNS])


def read_metrics_csv(path: Path) -> list[MetricsRow]:
    path = Path(path)
    if not path.exists():
        raise MissingInputError(f"metrics file {path} does not exist")
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(
                MetricsRow(
                    experiment=rec["experiment"],
                    model=rec["model"],
                    dataset=rec["dataset"],
                    seed=int(rec["seed"]),
                    condition_kind=rec["condition_kind"],
                    condition_level=float(rec["condition_level"]),
                    timestep=int(rec["timestep"]),
                    head=rec["head"],
                    metric_name=rec["metric_name"],
                    value=float(rec["value"]),
                )
            )
    if not rows:
        raise ConfigError(f"metrics file {path} contains no rows")
    return rows


# -- single-model evaluation ------------------------------------------


def episode_metrics(model, images: torch.Tensor, labels: torch.Tensor, batch_size=64, phase_seed=0):
    """Mean per-timestep metrics over a tensor of samples.

    Returns {(timestep, head, metric): value}. Single-head models report
    exact_match and partial_match under head 'digits'; dual-head models
    report accuracy per head.
    """
    n = images.shape[0]
    sums: dict[tuple, float] = {}
    with torch.no_grad():
        for start in range(0, n, batch_size):
            stop = min(start + batch_size, n)
            x = images[start:stop]
            y = labels[start:stop]
            trace = run_episode(model, x, phase_seed=phase_seed, sample_ids=range(start, stop))
            t_total = trace.n_timesteps
            for t in range(t_total):
                if model.cfg.head_mode == "single":
                    logits = trace.logits["digits"][t]
                    em = exact_match_accuracy(logits, y).sum().item()
                    pm = partial_match_accuracy(logits, y).sum().item()
                    sums[(t, "digits", "exact_match")] = sums.get((t, "digits", "exact_match"), 0.0) + em
                    sums[(t, "digits", "partial_match")] = sums.get((t, "digits", "partial_match"), 0.0) + pm
                else:
                    per_head = {h: trace.logits[h][t] for h in trace.logits}
                    accs = head_accuracy(per_head, {"cifar": y[:, 0], "item": y[:, 1]})
                    for h, a in accs.items():
                        key = (t, h, "accuracy")
                        sums[key] = sums.get(key, 0.0) + a.sum().item()
    return {k: v / n for k, v in sums.items()}


def _subset(split: SplitArrays, samples: int | None) -> SplitArrays:
    if samples is None or samples >= split.images.shape[0]:
        return split
    return SplitArrays(
        images=split.images[:samples],
        masks=split.masks[:samples],
        labels=split.labels[:samples],
    )


def _noise_sub_seed(base: int, model_seed: int, kind: str, level: float) -> int:
    kind_id = {"gaussian": 1, "salt_pepper": 2}[kind]
    return (base * 1_000_003 + model_seed * 1009 + kind_id * 101 + round(level * 1000)) % (2**31)


def apply_noise(images: np.ndarray, kind: str, level: float, sub_seed: int) -> np.ndarray:
    if level == 0.0:
        return images
    if kind == "gaussian":
        return add_gaussian_noise(images, level, sub_seed)
    if kind == "salt_pepper":
        out = np.empty_like(images)
        for i in range(images.shape[0]):
            out[i] = add_salt_pepper(images[i], level, sub_seed * 131071 + i)
        return out
    raise ConfigError(f"unknown noise kind {kind!r}")


# -- sweeps ------------------------------------------------------------


def discover_checkpoints(ckpt_dir: Path, model_name: str) -> dict[int, Path]:
    """Find {seed: ckpt_best.zip} under dirs named <model_name>_seed<N>."""
    ckpt_dir = Path(ckpt_dir)
    found = {}
    for sub in sorted(ckpt_dir.glob(f"{model_name}_seed*")):
        best = sub / "ckpt_best.zip"
        if best.exists():
            seed = int(sub.name.rsplit("seed", 1)[1])
            found[seed] = best
    return found


def noise_sweep(
    checkpoints: dict[str, dict[int, Path]],
    test_split: SplitArrays,
    spec: SweepSpec,
) -> list[MetricsRow]:
    """Accuracy rows for both noise kinds at every level/timestep/seed.

    checkpoints: model name -> {seed: path}. Models were trained on clean
    data; masks are never consumed here.
    """
    rows: list[MetricsRow] = []
    split = _subset(test_split, spec.samples)
    labels = torch.from_numpy(split.labels)
    defaults = {"gaussian": GAUSSIAN_LEVELS, "salt_pepper": SALT_PEPPER_LEVELS}
    kinds = {kind: (spec.levels or defaults[kind]) for kind in spec.kinds}
    for model_name, by_seed in sorted(checkpoints.items()):
        for seed, path in sorted(by_seed.items()):
            model, _ = restore_model(path)
            for kind, levels in kinds.items():
                all_levels = ((0.0,) if spec.include_control else ()) + tuple(levels)
                experiment = {"gaussian": "noise_gaussian", "salt_pepper": "noise_sp"}[kind]
                for level in all_levels:
                    sub = _noise_sub_seed(spec.noise_seed, seed, kind, level)
                    noisy = apply_noise(split.images, kind, level, sub)
                    metrics = episode_metrics(
                        model, torch.from_numpy(noisy), labels, spec.batch_size, phase_seed=sub
                    )
                    for (t, head, metric), value in metrics.items():
                        rows.append(
                            MetricsRow(
                                experiment=experiment,
                                model=model_name,
                                dataset=spec.dataset,
                                seed=seed,
                                condition_kind=kind,
                                condition_level=level,
                                timestep=t,
                                head=head,
                                metric_name=metric,
                                value=value,
                            )
                        )
    return rows


def overlay_sweep(
    checkpoints: dict[str, dict[int, Path]],
    test_split: SplitArrays,
    spec: SweepSpec,
) -> list[MetricsRow]:
    """Clean dual-head accuracy over timesteps (per head, per seed)."""
    rows: list[MetricsRow] = []
    split = _subset(test_split, spec.samples)
    images = torch.from_numpy(split.images)
    labels = torch.from_numpy(split.labels)
    for model_name, by_seed in sorted(checkpoints.items()):
        for seed, path in sorted(by_seed.items()):
            model, _ = restore_model(path)
            metrics = episode_metrics(model, images, labels, spec.batch_size, phase_seed=spec.noise_seed)
            for (t, head, metric), value in metrics.items():
                rows.append(
                    MetricsRow(
                        experiment="overlay",
                        model=model_name,
                        dataset=spec.dataset,
                        seed=seed,
                        condition_kind="clean",
                        condition_level=0.0,
                        timestep=t,
                        head=head,
                        metric_name=metric,
                        value=value,
                    )
                )
    return rows


def scale_sweep(
    checkpoints: dict[str, dict[int, Path]],
    splits_by_size: dict[int, SplitArrays],
    spec: SweepSpec,
) -> list[MetricsRow]:
    """Accuracies at smaller item sizes; size 28 rows are the control."""
    rows: list[MetricsRow] = []
    for model_name, by_seed in sorted(checkpoints.items()):
        for seed, path in sorted(by_seed.items()):
            model, _ = restore_model(path)
            for size, split in sorted(splits_by_size.items(), reverse=True):
                sub = _subset(split, spec.samples)
                metrics = episode_metrics(
                    model,
                    torch.from_numpy(sub.images),
                    torch.from_numpy(sub.labels),
                    spec.batch_size,
                    phase_seed=spec.noise_seed,
                )
                for (t, head, metric), value in metrics.items():
                    rows.append(
                        MetricsRow(
                            experiment="scale",
                            model=model_name,
                            dataset=spec.dataset,
                            seed=seed,
                            condition_kind="item_size",
                            condition_level=float(size),
                            timestep=t,
                            head=head,
                            metric_name=metric,
                            value=value,
                        )
                    )
    return rows


# -- statistics --------------------------------------------------------


@dataclass
class WelchResult:
    t: float
    p: float
    df: float
    degenerate: bool = False


def welch_t_test(sample_a, sample_b) -> WelchResult:
    """Two-sided Welch t-test with Welch-Satterthwaite degrees of freedom.

    Degenerate inputs (either sample smaller than 2, or both with zero
    variance) are flagged rather than silently passed.
    """
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if len(a) < 2 or len(b) < 2:
        return WelchResult(t=math.nan, p=math.nan, df=math.nan, degenerate=True)
    va = a.var(ddof=1) / len(a)
    vb = b.var(ddof=1) / len(b)
    if va + vb == 0.0:
        if a.mean() == b.mean():
            return WelchResult(t=0.0, p=1.0, df=float(len(a) + len(b) - 2), degenerate=True)
        return WelchResult(t=math.inf, p=0.0, df=math.nan, degenerate=True)
    t = (a.mean() - b.mean()) / math.sqrt(va + vb)
    df = (va + vb) ** 2 / (va**2 / (len(a) - 1) + vb**2 / (len(b) - 1))
    p = 2.0 * float(stdtr(df, -abs(t)))
    return WelchResult(t=float(t), p=p, df=float(df))


def one_sample_t_test(sample, value) -> WelchResult:
    """Two-sided one-sample t-test of `sample` against a fixed value.

    Used by the asymmetric protocol that pits one best-validation phase
    model against several baseline initializations. The sign convention
    keeps t positive when the fixed value exceeds the sample mean.
    """
    s = np.asarray(sample, dtype=np.float64)
    if len(s) < 2 or s.var(ddof=1) == 0.0:
        degenerate_t = 0.0 if np.allclose(s.mean(), value) else math.inf
        return WelchResult(t=degenerate_t, p=1.0 if degenerate_t == 0.0 else 0.0,
                           df=float(len(s) - 1), degenerate=True)
    se = math.sqrt(s.var(ddof=1) / len(s))
    t = (value - s.mean()) / se
    df = len(s) - 1
    p = 2.0 * float(stdtr(df, -abs(t)))
    return WelchResult(t=float(t), p=p, df=float(df))


def select_best_checkpoint(by_seed: dict[int, Path]) -> dict[int, Path]:
    """Keep only the checkpoint with the highest recorded validation accuracy."""
    from .checkpoint import load_checkpoint

    best_seed, best_acc = None, -math.inf
    for seed, path in sorted(by_seed.items()):
        meta, _, _ = load_checkpoint(path)
        acc = meta.get("val_accuracy", meta.get("best_val_accuracy", -math.inf))
        if acc > best_acc:
            best_seed, best_acc = seed, acc
    return {best_seed: by_seed[best_seed]}


def by_fdr_correct(p_values, q: float = 0.05) -> tuple[list[float], list[bool]]:
    """Benjamini-Yekutieli step-up: adjusted p_(k) = min_{j>=k} m*c(m)*p_(j)/j.

    c(m) is the harmonic sum over 1..m; adjusted values are capped at 1
    and significance flags derive from the adjusted values only.
    """
    ps = list(p_values)
    if not ps:
        raise ConfigError("by_fdr_correct needs at least one p-value")
    if any(p < 0 or p > 1 for p in ps):
        raise ConfigError("p-values must lie in [0, 1]")
    m = len(ps)
    c_m = sum(1.0 / k for k in range(1, m + 1))
    order = np.argsort(ps, kind="stable")
    adjusted = [0.0] * m
    running = 1.0
    for rank in range(m, 0, -1):
        idx = int(order[rank - 1])
        running = min(running, min(1.0, m * c_m * ps[idx] / rank))
        adjusted[idx] = running
    return adjusted, [p_adj <= q for p_adj in adjusted]


@dataclass
class StatsRow:
    experiment: str
    condition_level: float
    timestep: int
    head: str
    mean_gaspnet: float
    mean_baseline: float
    t: float
    p_raw: float
    p_fdr: float
    significant: bool


def compare_models(
    rows: list[MetricsRow],
    model_a: str = "gaspnet",
    model_b: str = "baseline",
    metric: str | None = None,
    q: float = 0.05,
) -> list[StatsRow]:
    """Per (experiment, level, timestep, head) Welch comparisons, BY-corrected
    within each experiment family."""
    primary = {"exact_match", "accuracy"} if metric is None else {metric}
    cells: dict[tuple, dict[str, dict[int, float]]] = {}
    for r in rows:
        if r.metric_name not in primary or r.model not in (model_a, model_b):
            continue
        key = (r.experiment, r.condition_level, r.timestep, r.head)
        cells.setdefault(key, {}).setdefault(r.model, {})[r.seed] = r.value

    out: list[StatsRow] = []
    by_experiment: dict[str, list[int]] = {}
    p_raws: list[float] = []
    for key in sorted(cells):
        exp, level, t, head = key
        got = cells[key]
        a = [v for _, v in sorted(got.get(model_a, {}).items())]
        b = [v for _, v in sorted(got.get(model_b, {}).items())]
        if not a or not b:
            continue
        if len(a) == 1 and len(b) >= 2:
            res = one_sample_t_test(b, a[0])
        elif len(b) == 1 and len(a) >= 2:
            res = one_sample_t_test(a, b[0])
            res = WelchResult(t=-res.t, p=res.p, df=res.df, degenerate=res.degenerate)
        else:
            res = welch_t_test(a, b)
        out.append(
            StatsRow(
                experiment=exp,
                condition_level=level,
                timestep=t,
                head=head,
                mean_gaspnet=float(np.mean(a)),
                mean_baseline=float(np.mean(b)),
                t=res.t,
                p_raw=res.p,
                p_fdr=math.nan,
                significant=False,
            )
        )
        by_experiment.setdefault(exp, []).append(len(out) - 1)
        p_raws.append(res.p)

    for exp, indices in by_experiment.items():
        usable = [i for i in indices if not math.isnan(p_raws[i])]
        if not usable:
            continue
        adjusted, flags = by_fdr_correct([p_raws[i] for i in usable], q)
        for i, p_adj, flag in zip(usable, adjusted, flags):
            out[i].p_fdr = p_adj
            out[i].significant = flag
    return out


def write_stats_csv(rows: list[StatsRow], path: Path) -> None:
    rows = sorted(rows, key=lambda r: (r.experiment, r.condition_level, r.timestep, r.head))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(STATS_COLUMNS)
        for r in rows:
            writer.writerow([_fmt(getattr(r, c)) for c in STATS_COLUMNS])
