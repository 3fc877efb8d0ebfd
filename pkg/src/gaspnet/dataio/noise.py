"""Test-time image corruptions: additive Gaussian and salt-and-pepper noise."""
from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from .rng import STREAM_NOISE, rng_for


def add_gaussian_noise(image: np.ndarray, sigma: float, seed: int) -> np.ndarray:
    """Add i.i.d. zero-mean Gaussian noise of std sigma per pixel, clipped to [0,1]."""
    if sigma < 0:
        raise ConfigError(f"gaussian noise sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return image.copy()
    rng = rng_for(STREAM_NOISE, seed)
    noisy = image + rng.normal(0.0, sigma, size=image.shape)
    return np.clip(noisy, 0.0, 1.0).astype(np.float32)


def add_salt_pepper(image: np.ndarray, p: float, seed: int) -> np.ndarray:
    """Replace each spatial pixel with probability p by 0 or 1 (equal odds).

    For multi-channel images the replacement applies across all channels
    of the pixel so corrupted pixels are pure black or white.
    """
    if not 0.0 <= p <= 1.0:
        raise ConfigError(f"salt-and-pepper probability must be in [0,1], got {p}")
    out = image.copy()
    if p == 0:
        return out
    rng = rng_for(STREAM_NOISE, seed)
    spatial = image.shape[-2:]
    hit = rng.random(spatial) < p
    value = (rng.random(spatial) < 0.5).astype(np.float32)
    if image.ndim == 2:
        out[hit] = value[hit]
    else:
        out[..., hit] = np.broadcast_to(value[hit], out[..., hit].shape)
    return out.astype(np.float32)
