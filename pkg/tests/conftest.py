import struct
import sys
from pathlib import Path

import numpy as np
import pytest
import torch

sys.path.insert(0, str(Path(__file__).resolve().parent))

from corpus import build_source_tree, glyph_digits  # noqa: E402


@pytest.fixture(scope="session")
def source_tree(tmp_path_factory) -> Path:
    """Small synthetic source layout (mnist/fashion/cifar) shared by tests."""
    root = tmp_path_factory.mktemp("sources")
    return build_source_tree(
        root,
        n_digit_train=400,
        n_digit_test=150,
        n_shape_train=150,
        n_shape_test=60,
        n_bg_train=120,
        n_bg_test=60,
        seed=901,
    )


@pytest.fixture(scope="session")
def digit_pool():
    """(images float32 [0,1], labels) pool for composition tests."""
    images, labels = glyph_digits(300, seed=17)
    return images.astype(np.float32) / 255.0, labels


def make_idx_images(images: np.ndarray) -> bytes:
    n, h, w = images.shape
    return struct.pack(">IIII", 0x00000803, n, h, w) + images.astype(np.uint8).tobytes()


def make_idx_labels(labels: np.ndarray) -> bytes:
    return struct.pack(">II", 0x00000801, len(labels)) + labels.astype(np.uint8).tobytes()


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(1)
