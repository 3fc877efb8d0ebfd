"""Plot generation from metrics CSVs and phase-map image export."""
from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from PIL import Image

from .checkpoint import restore_model
from .dataio.store import load_split
from .errors import ConfigError
from .evalstats import MetricsRow, read_metrics_csv
from .model import run_episode
from .phasecore import phase_to_image

_PRIMARY_METRICS = ("exact_match", "accuracy")


def _panel_groups(rows: list[MetricsRow]):
    """(experiment, kind, level, head) -> model -> timestep -> [values over seeds]."""
    panels: dict[tuple, dict[str, dict[int, list[float]]]] = defaultdict(
        lambda: defaultdict(lambda: defaultdict(list))
    )
    for r in rows:
        if r.metric_name not in _PRIMARY_METRICS:
            continue
        key = (r.experiment, r.condition_kind, r.condition_level, r.head)
        panels[key][r.model][r.timestep].append(r.value)
    return panels


def render_accuracy_plots(metrics_path: Path, out_dir: Path) -> list[Path]:
    """One accuracy-vs-timestep panel per (experiment, condition level, head)."""
    rows = read_metrics_csv(metrics_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for (experiment, kind, level, head), by_model in sorted(_panel_groups(rows).items()):
        fig, ax = plt.subplots(figsize=(4.0, 3.0))
        for model in sorted(by_model):
            steps = sorted(by_model[model])
            means = [float(np.mean(by_model[model][t])) for t in steps]
            ax.plot(steps, means, marker="o", label=model)
        ax.set_xlabel("timestep")
        ax.set_ylabel("accuracy")
        ax.set_ylim(0.0, 1.02)
        title = f"{experiment} {kind}={level:g}" + (f" [{head}]" if head != "digits" else "")
        ax.set_title(title, fontsize=9)
        ax.legend(fontsize=7)
        fig.tight_layout()
        level_tag = f"{level:g}".replace(".", "p").replace("-", "m")
        path = out_dir / f"{experiment}_{kind}_{level_tag}_{head}.svg"
        fig.savefig(path)
        plt.close(fig)
        written.append(path)
    if not written:
        raise ConfigError(f"no plottable rows in {metrics_path}")
    return written


def render_phase_maps(
    ckpt_path: Path, data_dir: Path, out_dir: Path, n_samples: int = 4, split: str = "test"
) -> list[Path]:
    """Input-grid phase fields as grayscale PNGs, one image per sample per timestep.

    Phases are wrapped to [0, 2 pi) and mapped linearly onto [0, 255].
    """
    import torch

    model, _ = restore_model(ckpt_path)
    arrays = load_split(data_dir, split)
    n = min(n_samples, arrays.images.shape[0])
    x = torch.from_numpy(arrays.images[:n])
    trace = run_episode(model, x, phase_seed=0, sample_ids=range(n))
    if trace.phases is None:
        raise ConfigError("phase maps need a phase-bearing model checkpoint (not the baseline)")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    side = model.cfg.image_size
    written = []
    for t in range(trace.n_timesteps):
        grid = trace.phases[t][:, : side * side].reshape(n, side, side).detach().numpy()
        for i in range(n):
            img = Image.fromarray(phase_to_image(grid[i]), mode="L")
            path = out_dir / f"phase_sample{i}_t{t}.png"
            img.save(path)
            written.append(path)
    return written
