"""Source ingestion and full dataset-directory generation for the CLI.

Source layout under --src:
    mnist/train-images-idx3-ubyte[.gz]    mnist/train-labels-idx1-ubyte[.gz]
    mnist/t10k-images-idx3-ubyte[.gz]     mnist/t10k-labels-idx1-ubyte[.gz]
    fashion/...same four names...
    cifar/data_batch_1.bin .. data_batch_5.bin, cifar/test_batch.bin

multi_mnist composes train/val from the training pool and test from the
test pool. Overlay datasets pair each background with a random item and
also write downscaled test variants (test_s24/s20/s17/s14) that reuse
the same item/background/position draws as the 28px test split.
"""
from __future__ import annotations

import gzip
from pathlib import Path

import numpy as np

from .dataio.cifar import parse_cifar10
from .dataio.compose import build_multi_item_split, build_overlay_split
from .dataio.idx import parse_idx
from .dataio.store import write_manifest, write_split
from .errors import MissingInputError

SCALE_TEST_SIZES = (24, 20, 17, 14)
# Disjoint index streams per split so val never replays train draws.
_SPLIT_BASE = {"train": 0, "val": 100_000_000, "test": 200_000_000}


def _read_maybe_gz(path: Path) -> bytes:
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as fh:
            return fh.read()
    return path.read_bytes()


def _find(src: Path, names: list[str]) -> Path:
    for name in names:
        for candidate in (src / name, src / (name + ".gz")):
            if candidate.exists():
                return candidate
    raise MissingInputError(f"none of {names}(.gz) found under {src}")


def load_idx_pair(src: Path, split: str) -> tuple[np.ndarray, np.ndarray]:
    """(images, labels) for 'train' or 't10k' from an IDX directory."""
    images = parse_idx(_read_maybe_gz(_find(src, [f"{split}-images-idx3-ubyte", f"{split}-images.idx3-ubyte"])))
    labels = parse_idx(_read_maybe_gz(_find(src, [f"{split}-labels-idx1-ubyte", f"{split}-labels.idx1-ubyte"])))
    if images.shape[0] != labels.shape[0]:
        raise MissingInputError(
            f"{split}: {images.shape[0]} images but {labels.shape[0]} labels under {src}"
        )
    return images, labels


def load_cifar_pool(src: Path, train: bool) -> tuple[np.ndarray, np.ndarray]:
    names = [f"data_batch_{i}.bin" for i in range(1, 6)] if train else ["test_batch.bin"]
    labels, images = [], []
    for name in names:
        path = src / name
        if not path.exists():
            raise MissingInputError(f"missing CIFAR batch {path}")
        lab, img = parse_cifar10(path.read_bytes())
        labels.append(lab)
        images.append(img)
    return np.concatenate(images), np.concatenate(labels)


def generate_dataset(dataset: str, src: Path, out: Path, seed: int, cfg: dict) -> dict:
    """Compose and write every split of one dataset; returns the manifest dict."""
    src, out = Path(src), Path(out)
    data_cfg = cfg["data"]
    counts = {
        "train": data_cfg["train_count"],
        "val": data_cfg["val_count"],
        "test": data_cfg["test_count"],
    }
    splits: dict[str, dict] = {}

    if dataset == "multi_mnist":
        train_images, train_labels = load_idx_pair(src / "mnist", "train")
        test_images, test_labels = load_idx_pair(src / "mnist", "t10k")
        pools = {
            "train": (train_images, train_labels),
            "val": (train_images, train_labels),
            "test": (test_images, test_labels),
        }
        for name, (imgs, labs) in pools.items():
            split = build_multi_item_split(
                imgs, labs, counts[name], seed, index_base=_SPLIT_BASE[name]
            )
            splits[name] = write_split(out, name, split)
    elif dataset in ("cifar_mnist", "cifar_fashion"):
        item_dir = src / ("mnist" if dataset == "cifar_mnist" else "fashion")
        item_train, item_train_labels = load_idx_pair(item_dir, "train")
        item_test, item_test_labels = load_idx_pair(item_dir, "t10k")
        bg_train, bg_train_labels = load_cifar_pool(src / "cifar", train=True)
        bg_test, bg_test_labels = load_cifar_pool(src / "cifar", train=False)

        n_train = min(counts["train"], len(bg_train))
        n_val = min(counts["val"], max(len(bg_train) - n_train, 0))
        if n_val == 0:
            # small pools: carve validation backgrounds off the train slice
            n_train = max(1, n_train - counts["val"])
            n_val = min(counts["val"], len(bg_train) - n_train)
        blend = data_cfg["blend"]
        split = build_overlay_split(
            bg_train[:n_train], bg_train_labels[:n_train],
            item_train, item_train_labels,
            n_train, seed, item_size=28, index_base=_SPLIT_BASE["train"], blend=blend,
        )
        splits["train"] = write_split(out, "train", split)
        split = build_overlay_split(
            bg_train[n_train : n_train + n_val], bg_train_labels[n_train : n_train + n_val],
            item_train, item_train_labels,
            n_val, seed, item_size=28, index_base=_SPLIT_BASE["val"], blend=blend,
        )
        splits["val"] = write_split(out, "val", split)
        n_test = min(counts["test"], len(bg_test))
        for size in (28, *SCALE_TEST_SIZES):
            name = "test" if size == 28 else f"test_s{size}"
            split = build_overlay_split(
                bg_test[:n_test], bg_test_labels[:n_test],
                item_test, item_test_labels,
                n_test, seed, item_size=size, index_base=_SPLIT_BASE["test"], blend=blend,
            )
            splits[name] = write_split(out, name, split)
    else:
        raise MissingInputError(f"unknown dataset {dataset!r}")

    write_manifest(out, dataset, seed, splits, extra={"source_dir": str(src)})
    return splits
