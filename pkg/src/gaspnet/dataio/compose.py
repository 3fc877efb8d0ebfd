"""Composition of the three synthetic datasets.

multi-item canvases: two source digits of distinct classes placed on a
32x32 canvas with disjoint tight bounding boxes, per-pixel maximum where
faint halos meet. Overlays: one (optionally downscaled) item blended in
transparency onto a 3-channel background. Every sample carries a
segmentation mask (0 background, 1 first item, 2 second item) and is a
pure function of (sources, config, seed, index).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, GaspnetError
from .resize import downscale_item
from .rng import STREAM_COMPOSE, rng_for

CANVAS = 32
# A pixel belongs to an item's mask when its source intensity is above
# this, which suppresses anti-aliasing halos.
FOREGROUND_THRESHOLD = 0.1
_MAX_PLACEMENTS = 50
_MAX_REDRAWS = 200


class CompositionError(GaspnetError):
    """Could not place two digits with disjoint boxes after bounded redraws."""


@dataclass
class Sample:
    """One composed image with its segmentation mask and label pair.

    labels[0] pairs with mask value 1 (first item / background class for
    overlays is labels[0]); see each composer for the exact convention.
    """

    image: np.ndarray  # float32, (C, H, W), values in [0, 1]
    mask: np.ndarray   # uint8, (H, W)
    labels: np.ndarray  # int64, (2,)


def tight_crop(img: np.ndarray) -> np.ndarray:
    """Crop to the bounding box of nonzero pixels."""
    rows = np.flatnonzero(img.max(axis=1) > 0)
    cols = np.flatnonzero(img.max(axis=0) > 0)
    if rows.size == 0:
        return img[:0, :0]
    return img[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1]


def _boxes_disjoint(r1, c1, h1, w1, r2, c2, h2, w2) -> bool:
    return r1 + h1 <= r2 or r2 + h2 <= r1 or c1 + w1 <= c2 or c2 + w2 <= c1


def compose_multi_item(
    images: np.ndarray,
    labels: np.ndarray,
    seed: int,
    index: int,
) -> Sample:
    """Compose one two-digit sample from a source pool.

    Draws two digits of distinct classes and random positions until the
    tight bounding boxes are disjoint; positions failing after bounded
    retries trigger a fresh draw of digits.
    """
    if len(images) < 2:
        raise CompositionError("source pool must contain at least two images")
    rng = rng_for(STREAM_COMPOSE, seed, index)

    for _ in range(_MAX_REDRAWS):
        i = int(rng.integers(len(images)))
        j = int(rng.integers(len(images)))
        if labels[i] == labels[j]:
            continue
        crop_a = tight_crop(images[i])
        crop_b = tight_crop(images[j])
        if crop_a.size == 0 or crop_b.size == 0:
            continue
        ha, wa = crop_a.shape
        hb, wb = crop_b.shape
        if ha > CANVAS or wa > CANVAS or hb > CANVAS or wb > CANVAS:
            continue
        for _ in range(_MAX_PLACEMENTS):
            ra = int(rng.integers(CANVAS - ha + 1))
            ca = int(rng.integers(CANVAS - wa + 1))
            rb = int(rng.integers(CANVAS - hb + 1))
            cb = int(rng.integers(CANVAS - wb + 1))
            if not _boxes_disjoint(ra, ca, ha, wa, rb, cb, hb, wb):
                continue
            canvas = np.zeros((CANVAS, CANVAS), dtype=np.float32)
            mask = np.zeros((CANVAS, CANVAS), dtype=np.uint8)
            canvas[ra : ra + ha, ca : ca + wa] = crop_a
            canvas[rb : rb + hb, cb : cb + wb] = np.maximum(
                canvas[rb : rb + hb, cb : cb + wb], crop_b
            )
            mask[ra : ra + ha, ca : ca + wa][crop_a > FOREGROUND_THRESHOLD] = 1
            mask[rb : rb + hb, cb : cb + wb][crop_b > FOREGROUND_THRESHOLD] = 2
            return Sample(
                image=canvas[None, :, :],
                mask=mask,
                labels=np.array([labels[i], labels[j]], dtype=np.int64),
            )
    raise CompositionError(
        f"no disjoint placement found after {_MAX_REDRAWS} digit redraws (seed={seed}, index={index})"
    )


def compose_overlay(
    background: np.ndarray,
    background_class: int,
    item: np.ndarray,
    item_class: int,
    item_size: int,
    seed: int,
    index: int = 0,
    blend: float = 0.5,
) -> Sample:
    """Blend a (resized) item onto a 3-channel background in transparency.

    out = clip((1-blend)*background + blend*item), item placed fully
    inside the canvas at a uniformly random position. Mask marks pixels
    where the resized item exceeds the foreground threshold.
    """
    if item_size > CANVAS:
        raise ConfigError(f"item size {item_size} exceeds canvas {CANVAS}")
    rng = rng_for(STREAM_COMPOSE, seed, index)
    resized = downscale_item(item, item_size) if item_size != item.shape[0] else item
    r = int(rng.integers(CANVAS - item_size + 1))
    c = int(rng.integers(CANVAS - item_size + 1))

    item_canvas = np.zeros((CANVAS, CANVAS), dtype=np.float32)
    item_canvas[r : r + item_size, c : c + item_size] = resized
    image = np.clip((1.0 - blend) * background + blend * item_canvas[None, :, :], 0.0, 1.0)
    mask = (item_canvas > FOREGROUND_THRESHOLD).astype(np.uint8)
    return Sample(
        image=image.astype(np.float32),
        mask=mask,
        labels=np.array([background_class, item_class], dtype=np.int64),
    )


@dataclass
class SplitArrays:
    """Stacked samples of one dataset split."""

    images: np.ndarray  # float32 (n, C, 32, 32)
    masks: np.ndarray   # uint8 (n, 32, 32)
    labels: np.ndarray  # int64 (n, 2)


def build_multi_item_split(
    images: np.ndarray, labels: np.ndarray, count: int, seed: int, index_base: int = 0
) -> SplitArrays:
    samples = [
        compose_multi_item(images, labels, seed, index_base + i) for i in range(count)
    ]
    return _stack(samples)


def build_overlay_split(
    backgrounds: np.ndarray,
    background_labels: np.ndarray,
    items: np.ndarray,
    item_labels: np.ndarray,
    count: int,
    seed: int,
    item_size: int = 28,
    index_base: int = 0,
    blend: float = 0.5,
) -> SplitArrays:
    """One composed sample per background image (cycled if count exceeds pool)."""
    samples = []
    for i in range(count):
        bg_idx = i % len(backgrounds)
        rng = rng_for(STREAM_COMPOSE, seed, index_base + i, 1)
        item_idx = int(rng.integers(len(items)))
        samples.append(
            compose_overlay(
                backgrounds[bg_idx],
                int(background_labels[bg_idx]),
                items[item_idx],
                int(item_labels[item_idx]),
                item_size,
                seed,
                index_base + i,
                blend=blend,
            )
        )
    return _stack(samples)


def _stack(samples: list[Sample]) -> SplitArrays:
    return SplitArrays(
        images=np.stack([s.image for s in samples]).astype(np.float32),
        masks=np.stack([s.mask for s in samples]),
        labels=np.stack([s.labels for s in samples]),
    )
