"""GASPnet and its parameter-matched feedforward baseline.

The backbone is three 3x3 conv blocks (relu, 2x2 maxpool, instance norm;
26/30/32 channels) and two dense layers (16 units, then one or two
10-way heads). GASPnet adds one phase per site plus per-layer key/query
projections; an episode interleaves Kuramoto phase updates with
phase-modulated forward passes over T timesteps, the first pass being
plain feedforward. The baseline widens the convs (28/32/35 by default)
to absorb the key/query parameter budget and has no phases.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import torch
from torch import nn

from .dataio.rng import STREAM_PHASE, rng_for
from .errors import ConfigError, NumericalError
from .numerics import conv2d, dense, instance_norm, maxpool2, relu
from .phasecore import (
    CouplingConfig,
    SiteTable,
    build_coupling_masks,
    coupling_core,
    grid_site_projection,
    kuramoto_step,
    modulated_conv_block,
    modulated_dense,
    project_keys_queries,
    unit_site_projection,
)

SINGLE_HEAD = ("digits",)
DUAL_HEADS = ("cifar", "item")


@dataclass
class GaspNetConfig:
    """Architecture plus phase/coupling hyperparameters for one dataset."""

    in_channels: int = 1
    conv_channels: tuple[int, int, int] = (26, 30, 32)
    dense_units: int = 16
    classes: int = 10
    head_mode: str = "single"  # "single" (two-hot) or "dual" (two 10-way heads)
    key_dim: int = 32          # D
    alpha: float = 1.0
    lam: float = 1.0
    kappa_dense: float = 100.0
    epsilon: float = -0.9
    tau: float = 5.0
    eps_theta: float = 1e-6
    omega: float = 0.5
    timesteps: int = 6
    learn_phase_init: bool = False
    baseline_channels: tuple[int, int, int] = (28, 32, 35)
    image_size: int = 32

    def __post_init__(self):
        if self.timesteps < 1:
            raise ConfigError(f"timesteps must be >= 1, got {self.timesteps}")
        if self.head_mode not in ("single", "dual"):
            raise ConfigError(f"head_mode must be single|dual, got {self.head_mode!r}")
        if any(c <= 0 for c in self.conv_channels) or any(c <= 0 for c in self.baseline_channels):
            raise ConfigError("channel counts must be positive")
        if self.image_size % 8 != 0:
            raise ConfigError("image size must survive three 2x2 poolings")

    @property
    def head_names(self) -> tuple[str, ...]:
        return SINGLE_HEAD if self.head_mode == "single" else DUAL_HEADS

    @property
    def coupling(self) -> CouplingConfig:
        return CouplingConfig(
            epsilon=self.epsilon,
            tau=self.tau,
            kappa_dense=self.kappa_dense,
            eps_theta=self.eps_theta,
            lam=self.lam,
            alpha=self.alpha,
        )

    def site_table(self) -> SiteTable:
        s = self.image_size
        layers: list[tuple[str, tuple[int, ...]]] = [("input", (s, s))]
        for i in range(3):
            s //= 2
            layers.append((f"conv{i + 1}", (s, s)))
        layers.append(("dense1", (self.dense_units,)))
        for name in self.head_names:
            layers.append((f"head_{name}", (self.classes,)))
        return SiteTable(layers)


def _uniform(shape, fan_in: int, gen: torch.Generator) -> nn.Parameter:
    bound = 1.0 / math.sqrt(fan_in)
    return nn.Parameter(torch.empty(shape).uniform_(-bound, bound, generator=gen))


class GaspNet(nn.Module):
    """Phase-modulated classifier; parameters live as flat named attributes."""

    def __init__(self, cfg: GaspNetConfig, seed: int = 0):
        super().__init__()
        self.cfg = cfg
        self.table = cfg.site_table()
        gen = torch.Generator().manual_seed(seed)

        chans = [cfg.in_channels, *cfg.conv_channels]
        for i in range(3):
            fan = chans[i] * 9
            setattr(self, f"conv{i + 1}_w", _uniform((chans[i + 1], chans[i], 3, 3), fan, gen))
            setattr(self, f"conv{i + 1}_b", _uniform((chans[i + 1],), fan, gen))

        flat_dim = cfg.conv_channels[2] * (cfg.image_size // 8) ** 2
        self.dense1_w = _uniform((cfg.dense_units, flat_dim), flat_dim, gen)
        self.dense1_b = _uniform((cfg.dense_units,), flat_dim, gen)
        for name in cfg.head_names:
            setattr(self, f"head_{name}_w", _uniform((cfg.classes, cfg.dense_units), cfg.dense_units, gen))
            setattr(self, f"head_{name}_b", _uniform((cfg.classes,), cfg.dense_units, gen))

        # Key/query maps: (D, C) per grid layer, (units, D) embeddings per dense layer.
        d = cfg.key_dim
        for tag, c in (("input", cfg.in_channels), ("conv1", chans[1]), ("conv2", chans[2]), ("conv3", chans[3])):
            setattr(self, f"kq_{tag}_q", _uniform((d, c), c, gen))
            setattr(self, f"kq_{tag}_k", _uniform((d, c), c, gen))
        self.kq_dense1_q = _uniform((cfg.dense_units, d), d, gen)
        self.kq_dense1_k = _uniform((cfg.dense_units, d), d, gen)
        for name in cfg.head_names:
            setattr(self, f"kq_head_{name}_q", _uniform((cfg.classes, d), d, gen))
            setattr(self, f"kq_head_{name}_k", _uniform((cfg.classes, d), d, gen))

        if cfg.learn_phase_init:
            self.phase_init = nn.Parameter(
                torch.empty(self.table.n_sites).normal_(0.0, 1.0, generator=gen)
            )
        else:
            self.phase_init = None

        self._mask_cache: dict[torch.dtype, tuple[torch.Tensor, torch.Tensor]] = {}

    # -- forward passes -------------------------------------------------

    def _plain_block(self, x: torch.Tensor, idx: int) -> torch.Tensor:
        w = getattr(self, f"conv{idx}_w")
        b = getattr(self, f"conv{idx}_b")
        return instance_norm(maxpool2(relu(conv2d(x, w, b))))

    def forward_plain(self, x: torch.Tensor):
        """Unmodulated pass; returns (activities by layer, logits by head)."""
        acts = {"input": x}
        h = x
        for i in (1, 2, 3):
            h = self._plain_block(h, i)
            acts[f"conv{i}"] = h
        d1 = relu(dense(h.flatten(1), self.dense1_w, self.dense1_b))
        acts["dense1"] = d1
        logits = {}
        for name in self.cfg.head_names:
            out = dense(d1, getattr(self, f"head_{name}_w"), getattr(self, f"head_{name}_b"))
            logits[name] = out
            acts[f"head_{name}"] = out
        return acts, logits

    def _phase_views(self, phi: torch.Tensor) -> dict[str, torch.Tensor]:
        """Slice the flat phase vector into per-layer fields."""
        b = phi.shape[0]
        views = {}
        for layer in self.table.layers:
            field_ = phi[:, layer.start : layer.stop]
            views[layer.name] = field_.reshape(b, *layer.shape)
        return views

    def forward_modulated(self, x: torch.Tensor, phi: torch.Tensor):
        """Phase-modulated pass with the per-site phases phi (B, N)."""
        cfg = self.cfg
        pv = self._phase_views(phi)
        acts = {"input": x}
        h, prev = x, pv["input"]
        for i in (1, 2, 3):
            grid = pv[f"conv{i}"]
            h = modulated_conv_block(
                h, prev, grid, getattr(self, f"conv{i}_w"), getattr(self, f"conv{i}_b"), cfg.alpha
            )
            acts[f"conv{i}"] = h
            prev = grid
        c3 = cfg.conv_channels[2]
        flat = h.flatten(1)
        # flatten order is channel-major, so tile the 4x4 spatial phases per channel
        phi_flat = prev.flatten(1).repeat(1, c3)
        d1 = relu(
            modulated_dense(flat, phi_flat, pv["dense1"], self.dense1_w, self.dense1_b, cfg.alpha)
        )
        acts["dense1"] = d1
        logits = {}
        for name in self.cfg.head_names:
            out = modulated_dense(
                d1,
                pv["dense1"],
                pv[f"head_{name}"],
                getattr(self, f"head_{name}_w"),
                getattr(self, f"head_{name}_b"),
                cfg.alpha,
            )
            logits[name] = out
            acts[f"head_{name}"] = out
        return acts, logits

    def keys_queries(self, acts: dict[str, torch.Tensor]):
        """Project the latest activities into per-site keys and queries."""
        entries = []
        for layer in self.table.layers:
            kind = "grid" if layer.is_grid else "unit"
            tag = layer.name
            entries.append(
                (kind, acts[tag], getattr(self, f"kq_{tag}_q"), getattr(self, f"kq_{tag}_k"))
            )
        return project_keys_queries(entries, self.table)

    def input_keys_queries(self, x: torch.Tensor):
        """Keys/queries of the input-grid sites (constant within an episode)."""
        return (
            grid_site_projection(x, self.kq_input_q),
            grid_site_projection(x, self.kq_input_k),
        )

    def dynamic_keys_queries(self, acts: dict[str, torch.Tensor]):
        """Keys/queries of every non-input site, in site-table order."""
        qs, ks = [], []
        for layer in self.table.layers[1:]:
            tag = layer.name
            wq = getattr(self, f"kq_{tag}_q")
            wk = getattr(self, f"kq_{tag}_k")
            if layer.is_grid:
                qs.append(grid_site_projection(acts[tag], wq))
                ks.append(grid_site_projection(acts[tag], wk))
            else:
                qs.append(unit_site_projection(acts[tag], wq))
                ks.append(unit_site_projection(acts[tag], wk))
        return torch.cat(qs, dim=1), torch.cat(ks, dim=1)

    def coupling_masks(self, dtype: torch.dtype):
        if dtype not in self._mask_cache:
            self._mask_cache[dtype] = build_coupling_masks(self.table, self.cfg.coupling, dtype)
        return self._mask_cache[dtype]

    def initial_phases(self, batch: int, seed: int = 0, sample_ids=None, dtype=torch.float32):
        """Initial per-site phases: learned vector or per-sample standard normal.

        Random draws key off (seed, sample id) so results do not depend
        on batch composition.
        """
        if self.phase_init is not None:
            return self.phase_init.to(dtype).unsqueeze(0).expand(batch, -1)
        if sample_ids is None:
            sample_ids = range(batch)
        draws = np.stack(
            [
                rng_for(STREAM_PHASE, seed, int(sid)).standard_normal(self.table.n_sites)
                for sid in sample_ids
            ]
        )
        return torch.from_numpy(draws).to(dtype)


@dataclass
class EpisodeTrace:
    """Per-timestep outputs of one episode; index 0 is the plain pass."""

    logits: dict[str, torch.Tensor]       # head -> (T, B, classes)
    phases: torch.Tensor | None           # (T, B, N); None for the baseline
    activities: list | None = None        # optional per-timestep activity dicts

    @property
    def n_timesteps(self) -> int:
        return next(iter(self.logits.values())).shape[0]


class _BlockCoupling:
    """Coupling + Kuramoto update with the input-site block hoisted.

    Input-site activities never change within an episode, so their
    keys/queries — and with them the input x input block of every
    coupling matrix and its |r| row sums — are computed once and reused
    at every timestep. Each step only forms the blocks involving the
    conv/dense sites. The update is algebraically identical to
    kuramoto_step on the fully assembled matrix.
    """

    def __init__(self, model: "GaspNet", q_in: torch.Tensor, k_in: torch.Tensor):
        scale, offset = model.coupling_masks(q_in.dtype)
        n = model.table.layer("input").size
        self.n_in = n
        self.lam = model.cfg.lam
        self.eps_theta = model.cfg.eps_theta
        self.q_in, self.k_in = q_in, k_in
        self.s = {
            "II": scale[:n, :n], "IC": scale[:n, n:],
            "CI": scale[n:, :n], "CC": scale[n:, n:],
        }
        self.o = {
            "II": offset[:n, :n], "IC": offset[:n, n:],
            "CI": offset[n:, :n], "CC": offset[n:, n:],
        }
        self.r_II = coupling_core(q_in, k_in, self.s["II"], self.o["II"])
        self.abs_II = self.r_II.abs().sum(dim=2)

    def step(self, q_ch: torch.Tensor, k_ch: torch.Tensor, phi: torch.Tensor) -> torch.Tensor:
        n = self.n_in
        r_ic = coupling_core(self.q_in, k_ch, self.s["IC"], self.o["IC"])
        r_ci = coupling_core(q_ch, self.k_in, self.s["CI"], self.o["CI"])
        r_cc = coupling_core(q_ch, k_ch, self.s["CC"], self.o["CC"])
        sin_p, cos_p = torch.sin(phi), torch.cos(phi)
        sc = torch.stack([sin_p, cos_p], dim=2)
        sc_in, sc_ch = sc[:, :n], sc[:, n:]
        rv = torch.cat(
            [
                torch.bmm(self.r_II, sc_in) + torch.bmm(r_ic, sc_ch),
                torch.bmm(r_ci, sc_in) + torch.bmm(r_cc, sc_ch),
            ],
            dim=1,
        )
        den = torch.cat(
            [self.abs_II + r_ic.abs().sum(2), r_ci.abs().sum(2) + r_cc.abs().sum(2)],
            dim=1,
        ) + self.eps_theta
        num = cos_p * rv[..., 0] - sin_p * rv[..., 1]
        return phi + self.lam * num / den


def run_episode(
    model: "GaspNet | Baseline",
    x: torch.Tensor,
    timesteps: int | None = None,
    phi0: torch.Tensor | None = None,
    phase_seed: int = 0,
    sample_ids=None,
    keep_activities: bool = False,
    blocked: bool = True,
) -> EpisodeTrace:
    """Unrolled T-timestep episode; gradients flow through every step.

    Timestep 0 is the plain feedforward pass; each later step builds the
    coupling matrix from the previous step's activities, applies one
    Kuramoto update, and reruns the modulated forward pass. blocked=False
    assembles the full N x N matrix per step instead of the hoisted-block
    form (same result, used for cross-checking).
    """
    t_total = timesteps or model.cfg.timesteps
    if isinstance(model, Baseline):
        return model.episode(x, t_total)

    acts, logits = model.forward_plain(x)
    if phi0 is None:
        phi0 = model.initial_phases(x.shape[0], phase_seed, sample_ids, dtype=x.dtype)
    phi = phi0

    all_logits = {h: [l] for h, l in logits.items()}
    all_phases = [phi]
    all_acts = [acts] if keep_activities else None

    if blocked:
        q_in, k_in = model.input_keys_queries(x)
        coupler = _BlockCoupling(model, q_in, k_in)
    else:
        scale, offset = model.coupling_masks(x.dtype)

    for t in range(1, t_total):
        if blocked:
            q_ch, k_ch = model.dynamic_keys_queries(acts)
            phi = coupler.step(q_ch, k_ch, phi)
        else:
            q, k = model.keys_queries(acts)
            r = coupling_core(q, k, scale, offset)
            phi = kuramoto_step(phi, r, model.cfg.lam, model.cfg.eps_theta)
        acts, logits = model.forward_modulated(x, phi)
        for h in logits:
            if not torch.isfinite(logits[h]).all():
                raise NumericalError(f"non-finite logits at timestep {t} (head {h})")
        if not torch.isfinite(phi).all():
            raise NumericalError(f"non-finite phases at timestep {t}")
        for h, l in logits.items():
            all_logits[h].append(l)
        all_phases.append(phi)
        if keep_activities:
            all_acts.append(acts)

    return EpisodeTrace(
        logits={h: torch.stack(ls) for h, ls in all_logits.items()},
        phases=torch.stack(all_phases),
        activities=all_acts,
    )


class Baseline(nn.Module):
    """Plain feedforward network with widened convs; no phases, no keys/queries."""

    def __init__(self, cfg: GaspNetConfig, seed: int = 0):
        super().__init__()
        self.cfg = cfg
        gen = torch.Generator().manual_seed(seed)
        chans = [cfg.in_channels, *cfg.baseline_channels]
        for i in range(3):
            fan = chans[i] * 9
            setattr(self, f"conv{i + 1}_w", _uniform((chans[i + 1], chans[i], 3, 3), fan, gen))
            setattr(self, f"conv{i + 1}_b", _uniform((chans[i + 1],), fan, gen))
        flat_dim = cfg.baseline_channels[2] * (cfg.image_size // 8) ** 2
        self.dense1_w = _uniform((cfg.dense_units, flat_dim), flat_dim, gen)
        self.dense1_b = _uniform((cfg.dense_units,), flat_dim, gen)
        for name in cfg.head_names:
            setattr(self, f"head_{name}_w", _uniform((cfg.classes, cfg.dense_units), cfg.dense_units, gen))
            setattr(self, f"head_{name}_b", _uniform((cfg.classes,), cfg.dense_units, gen))

    def forward(self, x: torch.Tensor) -> dict[str, torch.Tensor]:
        h = x
        for i in (1, 2, 3):
            w = getattr(self, f"conv{i}_w")
            b = getattr(self, f"conv{i}_b")
            h = instance_norm(maxpool2(relu(conv2d(h, w, b))))
        d1 = relu(dense(h.flatten(1), self.dense1_w, self.dense1_b))
        return {
            name: dense(d1, getattr(self, f"head_{name}_w"), getattr(self, f"head_{name}_b"))
            for name in self.cfg.head_names
        }

    def episode(self, x: torch.Tensor, timesteps: int | None = None) -> EpisodeTrace:
        """Constant trace: the same logits replicated across reported timesteps."""
        t_total = timesteps or self.cfg.timesteps
        logits = self.forward(x)
        return EpisodeTrace(
            logits={h: l.unsqueeze(0).expand(t_total, -1, -1) for h, l in logits.items()},
            phases=None,
        )


def build_gaspnet(cfg: GaspNetConfig, seed: int = 0) -> GaspNet:
    return GaspNet(cfg, seed)


def build_baseline(cfg: GaspNetConfig, seed: int = 0) -> Baseline:
    return Baseline(cfg, seed)


def count_parameters(model: nn.Module) -> tuple[int, dict[str, int]]:
    """Total trainable element count plus a per-array breakdown."""
    per_name = {name: p.numel() for name, p in model.named_parameters() if p.requires_grad}
    return sum(per_name.values()), per_name


def ablation_config(cfg: GaspNetConfig, which: str) -> GaspNetConfig:
    """Config for one of the three ablations of the full model."""
    if which == "alpha":
        return replace(cfg, alpha=0.0)
    if which == "omega":
        return replace(cfg, omega=0.0)
    if which == "coupling":
        return replace(cfg, kappa_dense=1.0, epsilon=0.0, tau=1.0)
    raise ConfigError(f"unknown ablation {which!r} (alpha|omega|coupling)")
