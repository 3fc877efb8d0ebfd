"""Phase machinery: site enumeration, key/query coupling, Kuramoto updates,
and phase-modulated convolution/dense transforms.

Every phase lives at a "site": one per input pixel, one per post-pool
spatial position of each conv layer (shared across channels), one per
dense unit. Site indices are global and contiguous in layer order with
grids enumerated row-major; dense layers come last so the dense/dense
coupling block is a contiguous slice.

Couplings between sites i, j are r_ij = (<q_i, k_j> * n_ij - eps) / kappa_ij
where n_ij boosts 4-neighbors on the same spatial grid by tau and
kappa_ij divides dense-dense pairs by kappa_dense. eps is subtracted as
printed, so a negative eps strengthens every coupling. One Kuramoto step
moves each phase toward its coupling-weighted neighbors:

    phi_i += lam * sum_j r_ij sin(phi_j - phi_i) / (sum_j |r_ij| + eps_theta)

Modulation multiplies each connection by 1 + alpha*cos(phase difference);
for convolutions this is evaluated with three standard convolutions
(plain, cos-weighted, sin-weighted) via the cosine-difference expansion,
which tests cross-check against a direct nested-sum reference.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .numerics import conv2d, dense, instance_norm, maxpool2, relu

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class SiteLayer:
    """One layer's block of sites."""

    name: str
    shape: tuple[int, ...]  # (H, W) for grids, (units,) for dense layers
    start: int

    @property
    def size(self) -> int:
        n = 1
        for d in self.shape:
            n *= d
        return n

    @property
    def stop(self) -> int:
        return self.start + self.size

    @property
    def is_grid(self) -> bool:
        return len(self.shape) == 2


class SiteTable:
    """Bijective mapping between global site indices and (layer, position)."""

    def __init__(self, layers: list[tuple[str, tuple[int, ...]]]):
        self.layers: list[SiteLayer] = []
        start = 0
        for name, shape in layers:
            layer = SiteLayer(name=name, shape=tuple(shape), start=start)
            self.layers.append(layer)
            start = layer.stop
        self.n_sites = start
        self._by_name = {l.name: l for l in self.layers}
        if len(self._by_name) != len(self.layers):
            raise ValueError("duplicate layer names in site table")
        # Dense layers must be trailing and contiguous so their coupling
        # block is a single slice.
        seen_dense = False
        for layer in self.layers:
            if not layer.is_grid:
                seen_dense = True
            elif seen_dense:
                raise ValueError("grid layers must precede dense layers")
        dense = [l for l in self.layers if not l.is_grid]
        self.dense_start = dense[0].start if dense else self.n_sites

    def layer(self, name: str) -> SiteLayer:
        return self._by_name[name]

    def slice(self, name: str) -> slice:
        layer = self._by_name[name]
        return slice(layer.start, layer.stop)

    def site_of(self, name: str, *pos: int) -> int:
        """Global index of a position within a layer (row, col) or (unit,)."""
        layer = self._by_name[name]
        if layer.is_grid:
            r, c = pos
            return layer.start + r * layer.shape[1] + c
        return layer.start + pos[0]

    def neighbor_pairs(self) -> tuple[torch.Tensor, torch.Tensor]:
        """(i, j) index arrays of all ordered 4-neighbor pairs on each grid."""
        ii, jj = [], []
        for layer in self.layers:
            if not layer.is_grid:
                continue
            h, w = layer.shape
            idx = layer.start + np.arange(h * w).reshape(h, w)
            right = np.stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()])
            down = np.stack([idx[:-1, :].ravel(), idx[1:, :].ravel()])
            for a, b in (right, down):
                ii.extend([a, b])
                jj.extend([b, a])
        if not ii:
            return torch.zeros(0, dtype=torch.long), torch.zeros(0, dtype=torch.long)
        return (
            torch.from_numpy(np.concatenate(ii)),
            torch.from_numpy(np.concatenate(jj)),
        )


@dataclass
class CouplingConfig:
    """Hyperparameters of the coupling matrix and phase update."""

    epsilon: float = -0.9   # coupling offset, subtracted as printed
    tau: float = 5.0        # same-grid 4-neighbor boost
    kappa_dense: float = 100.0  # divisor for dense/dense pairs
    eps_theta: float = 1e-6  # stabilizer in the update denominator
    lam: float = 1.0        # phase step size per timestep
    alpha: float = 1.0      # modulation strength in [0, 1]

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0,1], got {self.alpha}")
        if self.eps_theta <= 0:
            raise ValueError(f"eps_theta must be positive, got {self.eps_theta}")


def build_coupling_masks(
    table: SiteTable, cfg: CouplingConfig, dtype=torch.float32
) -> tuple[torch.Tensor, torch.Tensor]:
    """Constant (scale, offset) with r = <q_i,k_j> * scale_ij + offset_ij.

    scale_ij = n_ij / kappa_ij and offset_ij = -eps / kappa_ij, which is
    exactly the coupling definition with the case structure folded into
    two dense constants.
    """
    n = table.n_sites
    scale = torch.ones(n, n, dtype=dtype)
    ii, jj = table.neighbor_pairs()
    scale[ii, jj] = cfg.tau
    offset = torch.full((n, n), -cfg.epsilon, dtype=dtype)
    d = table.dense_start
    scale[d:, d:] /= cfg.kappa_dense
    offset[d:, d:] /= cfg.kappa_dense
    return scale, offset


def coupling_core(q: torch.Tensor, k: torch.Tensor, scale: torch.Tensor, offset: torch.Tensor) -> torch.Tensor:
    """r = (q @ k^T) * scale + offset, batched."""
    g = torch.bmm(q, k.transpose(1, 2))
    return torch.addcmul(offset, g, scale)


def coupling_matrix(
    q: torch.Tensor, k: torch.Tensor, table: SiteTable, cfg: CouplingConfig
) -> torch.Tensor:
    """Coupling matrix r (N x N, batched) from keys/queries and the site layout."""
    squeeze = q.ndim == 2
    if squeeze:
        q, k = q.unsqueeze(0), k.unsqueeze(0)
    if q.shape[1] != table.n_sites:
        raise ValueError(f"q has {q.shape[1]} sites, table has {table.n_sites}")
    scale, offset = build_coupling_masks(table, cfg, dtype=q.dtype)
    r = coupling_core(q, k, scale, offset)
    return r.squeeze(0) if squeeze else r


def kuramoto_step(
    phi: torch.Tensor, r: torch.Tensor, lam: float, eps_theta: float = 1e-6
) -> torch.Tensor:
    """One normalized Kuramoto update of all phases (differentiable).

    The j sum runs over every site including j = i (the diagonal term is
    zero in the numerator but its |r_ii| does appear in the denominator).
    """
    squeeze = phi.ndim == 1
    if squeeze:
        phi, r = phi.unsqueeze(0), r.unsqueeze(0)
    sin_p, cos_p = torch.sin(phi), torch.cos(phi)
    # sum_j r_ij sin(phi_j - phi_i) = cos_i (r sin)_i - sin_i (r cos)_i
    sc = torch.stack([sin_p, cos_p], dim=2)
    rv = torch.bmm(r, sc)
    numer = cos_p * rv[..., 0] - sin_p * rv[..., 1]
    denom = r.abs().sum(dim=2) + eps_theta
    out = phi + lam * numer / denom
    return out.squeeze(0) if squeeze else out


def upsample_phases(phi: torch.Tensor, factor: int) -> torch.Tensor:
    """Nearest-neighbor upsampling of a (..., H, W) phase field."""
    if factor == 1:
        return phi
    return phi.repeat_interleave(factor, dim=-2).repeat_interleave(factor, dim=-1)


def modulated_conv(
    x: torch.Tensor,
    phi_prev: torch.Tensor,
    phi_next: torch.Tensor,
    kernel: torch.Tensor,
    bias: torch.Tensor | None = None,
    alpha: float = 1.0,
) -> torch.Tensor:
    """Convolution with every tap weighted by 1 + alpha*cos(phase difference).

    phi_prev matches x's spatial resolution, phi_next the output's (same
    size here, padding 1). Evaluated as
    conv(x) + alpha*(cos(phi_next)*conv(cos(phi_prev)*x)
                     + sin(phi_next)*conv(sin(phi_prev)*x)),
    which expands cos(phi_next - phi_prev) without a custom conv op.
    """
    squeeze = x.ndim == 3
    if squeeze:
        x = x.unsqueeze(0)
        phi_prev, phi_next = phi_prev.unsqueeze(0), phi_next.unsqueeze(0)
    if phi_prev.shape[-2:] != x.shape[-2:]:
        raise ValueError(
            f"phi_prev resolution {tuple(phi_prev.shape[-2:])} != input {tuple(x.shape[-2:])}"
        )
    if phi_next.shape[-2:] != x.shape[-2:]:
        raise ValueError(
            f"phi_next resolution {tuple(phi_next.shape[-2:])} != conv output {tuple(x.shape[-2:])}"
        )
    plain = conv2d(x, kernel, bias)
    if alpha == 0.0:
        out = plain
    else:
        pp = phi_prev.unsqueeze(1)
        c_cos = conv2d(x * torch.cos(pp), kernel)
        c_sin = conv2d(x * torch.sin(pp), kernel)
        pn = phi_next.unsqueeze(1)
        out = plain + alpha * (torch.cos(pn) * c_cos + torch.sin(pn) * c_sin)
    return out.squeeze(0) if squeeze else out


def modulated_conv_block(
    x: torch.Tensor,
    phi_prev: torch.Tensor,
    phi_next_grid: torch.Tensor,
    kernel: torch.Tensor,
    bias: torch.Tensor | None = None,
    alpha: float = 1.0,
) -> torch.Tensor:
    """Full conv block: modulated conv -> relu -> 2x2 maxpool -> instance norm.

    phi_next_grid lives on the block's post-pool grid and is upsampled
    (nearest) to the conv output resolution before use.
    """
    factor = x.shape[-1] // phi_next_grid.shape[-1]
    if phi_next_grid.shape[-1] * factor != x.shape[-1]:
        raise ValueError(
            f"post-pool grid {tuple(phi_next_grid.shape[-2:])} does not divide "
            f"conv resolution {tuple(x.shape[-2:])}"
        )
    phi_next = upsample_phases(phi_next_grid, factor)
    y = modulated_conv(x, phi_prev, phi_next, kernel, bias, alpha)
    return instance_norm(maxpool2(relu(y)))


def modulated_dense(
    x: torch.Tensor,
    phi_prev: torch.Tensor,
    phi_next: torch.Tensor,
    weight: torch.Tensor,
    bias: torch.Tensor | None = None,
    alpha: float = 1.0,
) -> torch.Tensor:
    """Affine layer with connections weighted by 1 + alpha*cos(phase difference).

    out_j = sum_i (1 + alpha*cos(phi_next_j - phi_prev_i)) W_ji x_i + b_j.
    """
    plain = dense(x, weight, bias)
    if alpha == 0.0:
        return plain
    c = dense(x * torch.cos(phi_prev), weight)
    s = dense(x * torch.sin(phi_prev), weight)
    return plain + alpha * (torch.cos(phi_next) * c + torch.sin(phi_next) * s)


def grid_site_projection(x: torch.Tensor, w: torch.Tensor) -> torch.Tensor:
    """Project (B, C, H, W) activities to (B, H*W, D) with a (D, C) map."""
    return x.flatten(2).transpose(1, 2) @ w.T


def unit_site_projection(a: torch.Tensor, emb: torch.Tensor) -> torch.Tensor:
    """Scale (U, D) per-unit embeddings by (B, U) activations -> (B, U, D)."""
    return a.unsqueeze(2) * emb.unsqueeze(0)


def project_keys_queries(
    layer_entries: list[tuple], table: SiteTable
) -> tuple[torch.Tensor, torch.Tensor]:
    """Assemble per-site keys and queries (B, N, D) in site-table order.

    Each entry describes one layer, aligned with table.layers:
      ("grid", x, wq, wk): x (B, C, H, W) activities; wq/wk (D, C) linear
        maps applied to the channel vector at every spatial site.
      ("unit", a, eq, ek): a (B, U) scalar activations; eq/ek (U, D)
        per-unit embeddings scaled by the activation.
    """
    if len(layer_entries) != len(table.layers):
        raise ValueError(f"expected {len(table.layers)} entries, got {len(layer_entries)}")
    qs, ks = [], []
    for entry, layer in zip(layer_entries, table.layers):
        kind = entry[0]
        if kind == "grid":
            _, x, wq, wk = entry
            if x.shape[-2:] != layer.shape:
                raise ValueError(f"layer {layer.name}: grid {tuple(x.shape[-2:])} != {layer.shape}")
            qs.append(grid_site_projection(x, wq))
            ks.append(grid_site_projection(x, wk))
        elif kind == "unit":
            _, a, eq, ek = entry
            if a.shape[-1] != layer.size:
                raise ValueError(f"layer {layer.name}: {a.shape[-1]} units != {layer.size}")
            qs.append(unit_site_projection(a, eq))
            ks.append(unit_site_projection(a, ek))
        else:
            raise ValueError(f"unknown site kind {kind!r}")
    return torch.cat(qs, dim=1), torch.cat(ks, dim=1)


def circular_order_parameter(phi: torch.Tensor) -> torch.Tensor:
    """R = |mean exp(i phi)| over the last dimension; 1 = full synchrony."""
    if phi.shape[-1] == 0:
        raise ValueError("order parameter of an empty phase set")
    return torch.sqrt(torch.cos(phi).mean(-1) ** 2 + torch.sin(phi).mean(-1) ** 2)


def phase_to_image(phi: np.ndarray) -> np.ndarray:
    """Map phases (mod 2 pi) linearly onto uint8 [0, 255] for export."""
    wrapped = np.mod(np.asarray(phi, dtype=np.float64), TWO_PI)
    return np.clip(np.round(wrapped * (255.0 / TWO_PI)), 0, 255).astype(np.uint8)
