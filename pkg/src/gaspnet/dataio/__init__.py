"""Dataset ingestion and composition."""
from .cifar import load_cifar10, parse_cifar10
from .compose import (
    CANVAS,
    FOREGROUND_THRESHOLD,
    CompositionError,
    Sample,
    SplitArrays,
    build_multi_item_split,
    build_overlay_split,
    compose_multi_item,
    compose_overlay,
    tight_crop,
)
from .idx import load_idx, parse_idx
from .noise import add_gaussian_noise, add_salt_pepper
from .resize import downscale_item
from .rng import rng_for
from .store import load_split, read_manifest, write_manifest, write_split

__all__ = [
    "CANVAS",
    "FOREGROUND_THRESHOLD",
    "CompositionError",
    "Sample",
    "SplitArrays",
    "add_gaussian_noise",
    "add_salt_pepper",
    "build_multi_item_split",
    "build_overlay_split",
    "compose_multi_item",
    "compose_overlay",
    "downscale_item",
    "load_cifar10",
    "load_idx",
    "load_split",
    "parse_cifar10",
    "parse_idx",
    "read_manifest",
    "rng_for",
    "tight_crop",
    "write_manifest",
    "write_split",
]
