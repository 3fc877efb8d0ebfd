"""Bilinear resampling used to downscale overlay items.

Half-pixel-center convention: output pixel i samples the source at
(i + 0.5) * scale - 0.5, clamped at the borders. Weights sum to one, so
constant images stay constant and values stay inside [0, 1].
"""
from __future__ import annotations

import numpy as np

from ..errors import ConfigError


def downscale_item(item: np.ndarray, size: int) -> np.ndarray:
    """Resize a square single-channel image to size x size (bilinear)."""
    if size <= 0:
        raise ConfigError(f"target size must be positive, got {size}")
    src = item.shape[0]
    if size > src:
        raise ConfigError(f"target size {size} exceeds source size {src}")
    if size == src:
        return item.astype(np.float32).copy()

    scale = src / size
    centers = (np.arange(size) + 0.5) * scale - 0.5
    lo = np.floor(centers).astype(np.int64)
    frac = (centers - lo).astype(np.float32)
    lo0 = np.clip(lo, 0, src - 1)
    lo1 = np.clip(lo + 1, 0, src - 1)

    img = item.astype(np.float32)
    rows = img[lo0, :] * (1 - frac)[:, None] + img[lo1, :] * frac[:, None]
    out = rows[:, lo0] * (1 - frac)[None, :] + rows[:, lo1] * frac[None, :]
    return out.astype(np.float32)
