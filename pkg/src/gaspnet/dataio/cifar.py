"""Parser for CIFAR-10 binary batches.

Each record is 3073 bytes: one label byte (0..9) followed by 3072 pixel
bytes in channel-major order (1024 red, 1024 green, 1024 blue), each
channel a row-major 32x32 plane.
"""
from __future__ import annotations

import numpy as np

from ..errors import LabelRangeError, RecordFormatError

RECORD_BYTES = 3073
_IMAGE_BYTES = 3072
_NUM_CLASSES = 10


def parse_cifar10(data: bytes) -> tuple[np.ndarray, np.ndarray]:
    """Decode a CIFAR-10 binary batch into (labels int64 (n,), images float32 (n,3,32,32)).

    Pixel bytes are scaled to [0, 1].
    """
    if len(data) == 0 or len(data) % RECORD_BYTES != 0:
        raise RecordFormatError(
            f"batch length {len(data)} is not a positive multiple of {RECORD_BYTES}"
        )
    raw = np.frombuffer(data, dtype=np.uint8).reshape(-1, RECORD_BYTES)
    labels = raw[:, 0].astype(np.int64)
    if labels.max(initial=0) >= _NUM_CLASSES:
        bad = int(labels.max())
        raise LabelRangeError(f"label byte {bad} outside 0..{_NUM_CLASSES - 1}")
    images = raw[:, 1:].reshape(-1, 3, 32, 32).astype(np.float32) / 255.0
    return labels, images


def load_cifar10(paths) -> tuple[np.ndarray, np.ndarray]:
    """Concatenate one or more binary batch files."""
    labels, images = [], []
    for path in paths:
        with open(path, "rb") as fh:
            lab, img = parse_cifar10(fh.read())
        labels.append(lab)
        images.append(img)
    return np.concatenate(labels), np.concatenate(images)
