"""Classification losses, the synchrony loss, and accuracy metrics.

The synchrony loss drives the input-resolution phase field: within each
mask-derived group phases should agree (circular variance term) while
the group centroids should spread out and cancel on the unit circle
(squared magnitude of the centroid phasor sum).
"""
from __future__ import annotations

import torch
import torch.nn.functional as F

# Below this phasor magnitude a group's circular mean is undefined and
# its centroid contributes a zero vector.
_CENTROID_TINY = 1e-12


def two_hot_cross_entropy(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Cross-entropy against a target of 0.5 on each of two distinct classes.

    logits (B, C) or (C,); labels (B, 2) or (2,). Returns the batch-mean
    scalar loss.
    """
    squeeze = logits.ndim == 1
    if squeeze:
        logits, labels = logits.unsqueeze(0), labels.unsqueeze(0)
    if labels.shape[-1] != 2:
        raise ValueError(f"labels must be pairs, got shape {tuple(labels.shape)}")
    if (labels[:, 0] == labels[:, 1]).any():
        raise ValueError("two-hot labels must contain two distinct classes")
    n_classes = logits.shape[-1]
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError(f"label outside 0..{n_classes - 1}")
    logp = F.log_softmax(logits, dim=-1)
    picked = torch.gather(logp, 1, labels)
    return -(0.5 * picked.sum(dim=1)).mean()


def head_cross_entropy(
    logits: dict[str, torch.Tensor], labels: dict[str, torch.Tensor]
) -> torch.Tensor:
    """Sum of standard cross-entropies over classification heads."""
    if set(logits) != set(labels):
        raise ValueError(f"head mismatch: logits {sorted(logits)} vs labels {sorted(labels)}")
    total = None
    for name in sorted(logits):
        loss = F.cross_entropy(logits[name], labels[name])
        total = loss if total is None else total + loss
    return total


def circular_variance(phi: torch.Tensor) -> torch.Tensor:
    """1 - |mean exp(i phi)|; 0 for identical phases, 1 for full cancellation."""
    if phi.numel() == 0:
        raise ValueError("circular variance of an empty set")
    return 1.0 - torch.sqrt(torch.cos(phi).mean() ** 2 + torch.sin(phi).mean() ** 2)


def mask_groups(mask: torch.Tensor | "np.ndarray") -> torch.Tensor:
    """Flatten a (B, H, W) segmentation mask into per-site group ids (B, H*W)."""
    groups = torch.as_tensor(mask, dtype=torch.long)
    squeeze = groups.ndim == 2
    if squeeze:
        groups = groups.unsqueeze(0)
    out = groups.reshape(groups.shape[0], -1)
    return out.squeeze(0) if squeeze else out


def synchrony_loss(
    phi: torch.Tensor, groups: torch.Tensor, num_groups: int | None = None
) -> torch.Tensor:
    """Intra-group synchrony plus inter-group centroid cancellation.

    loss = 0.5 * [ mean_l V_l(phi) + |sum_l exp(i <phi>_l)|^2 / (2 G) ]

    phi and groups are (B, n) or (n,); groups holds integer ids. G counts
    the groups present in each sample unless num_groups pins it, in which
    case an absent group raises. exp(i <phi>_l) is evaluated as the
    unit-normalized group phasor sum, with a zero vector when the sum's
    magnitude vanishes (undefined circular mean).
    """
    squeeze = phi.ndim == 1
    if squeeze:
        phi, groups = phi.unsqueeze(0), groups.unsqueeze(0)
    if phi.shape != groups.shape:
        raise ValueError(f"phi {tuple(phi.shape)} and groups {tuple(groups.shape)} differ")
    b = phi.shape[0]
    g_max = int(groups.max().item()) + 1
    if num_groups is not None:
        if num_groups < 1 or g_max > num_groups:
            raise ValueError(f"group ids exceed num_groups={num_groups}")
        g_max = num_groups

    zeros = torch.zeros(b, g_max, dtype=phi.dtype, device=phi.device)
    cos_sum = zeros.scatter_add(1, groups, torch.cos(phi))
    sin_sum = torch.zeros_like(zeros).scatter_add(1, groups, torch.sin(phi))
    count = torch.zeros_like(zeros).scatter_add(1, groups, torch.ones_like(phi))
    present = count > 0
    if num_groups is not None and not present.all():
        raise ValueError("a requested group has zero sites")

    n_present = present.sum(dim=1).to(phi.dtype)
    mag = torch.sqrt(cos_sum**2 + sin_sum**2)
    variance = torch.where(present, 1.0 - mag / count.clamp(min=1.0), zeros)
    intra = variance.sum(dim=1) / n_present

    safe = mag > _CENTROID_TINY
    unit_cos = torch.where(safe, cos_sum / mag.clamp(min=_CENTROID_TINY), zeros)
    unit_sin = torch.where(safe, sin_sum / mag.clamp(min=_CENTROID_TINY), zeros)
    unit_cos = torch.where(present, unit_cos, zeros)
    unit_sin = torch.where(present, unit_sin, zeros)
    inter = (unit_cos.sum(dim=1) ** 2 + unit_sin.sum(dim=1) ** 2) / (2.0 * n_present)

    loss = 0.5 * (intra + inter)
    return loss.squeeze(0) if squeeze else loss.mean()


def total_loss(classification: torch.Tensor, synchrony: torch.Tensor, omega: float) -> torch.Tensor:
    """Combined objective evaluated on last-timestep outputs."""
    return classification + omega * synchrony


def top2_predictions(logits: torch.Tensor) -> torch.Tensor:
    """Indices of the two largest logits, rank-2 ties broken by lower class index."""
    squeeze = logits.ndim == 1
    if squeeze:
        logits = logits.unsqueeze(0)
    order = torch.argsort(logits, dim=-1, descending=True, stable=True)
    top2 = order[:, :2]
    return top2.squeeze(0) if squeeze else top2


def exact_match_accuracy(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """1 iff the top-2 prediction set equals the label pair, else 0 (per sample)."""
    squeeze = logits.ndim == 1
    if squeeze:
        logits, labels = logits.unsqueeze(0), labels.unsqueeze(0)
    top2 = top2_predictions(logits)
    a, b = labels[:, 0], labels[:, 1]
    t0, t1 = top2[:, 0], top2[:, 1]
    hit = ((t0 == a) & (t1 == b)) | ((t0 == b) & (t1 == a))
    out = hit.to(torch.float32)
    return out.squeeze(0) if squeeze else out


def partial_match_accuracy(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Per-digit credit: |top-2 set ∩ label set| / 2 (per sample)."""
    squeeze = logits.ndim == 1
    if squeeze:
        logits, labels = logits.unsqueeze(0), labels.unsqueeze(0)
    top2 = top2_predictions(logits)
    hits = (top2.unsqueeze(2) == labels.unsqueeze(1)).any(dim=2).sum(dim=1)
    out = hits.to(torch.float32) / 2.0
    return out.squeeze(0) if squeeze else out


def head_accuracy(
    logits: dict[str, torch.Tensor], labels: dict[str, torch.Tensor]
) -> dict[str, torch.Tensor]:
    """Per-head argmax accuracy, reported separately per head (never averaged)."""
    out = {}
    for name in logits:
        pred = logits[name].argmax(dim=-1)
        out[name] = (pred == labels[name]).to(torch.float32)
    return out
