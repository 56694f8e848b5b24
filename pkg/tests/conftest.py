"""Shared fixtures: synthetic datasets sized for fast tests."""
from __future__ import annotations

import gzip

import numpy as np
import pytest

from afkan.data import Dataset, write_idx_images, write_idx_labels


def make_tiny_dataset(n, d=16, num_classes=10, seed=0, name="tiny"):
    """A learnable toy problem: the label's pixel block is brightened."""
    rng = np.random.default_rng(seed)
    images = rng.uniform(0.0, 0.35, size=(n, d))
    labels = rng.integers(0, num_classes, size=n)
    block = d // num_classes if d >= num_classes else 1
    for i, lab in enumerate(labels):
        j = (lab * block) % d
        images[i, j] = rng.uniform(0.75, 1.0)
    return Dataset(name=name, images=images, labels=labels,
                   num_classes=num_classes)


@pytest.fixture
def tiny_train():
    return make_tiny_dataset(96, seed=1)


@pytest.fixture
def tiny_test():
    return make_tiny_dataset(48, seed=2)


def write_idx_dataset(root, name, n_train=64, n_test=32, seed=0,
                      rows=28, cols=28, compress_train=True):
    """Lay out the four canonical IDX files for load_dataset, images as
    random bytes. The train pair is gzipped to cover that path."""
    rng = np.random.default_rng(seed)
    directory = root / name
    directory.mkdir(parents=True, exist_ok=True)
    sets = {
        "train-images-idx3-ubyte": ("img", n_train),
        "train-labels-idx1-ubyte": ("lab", n_train),
        "t10k-images-idx3-ubyte": ("img", n_test),
        "t10k-labels-idx1-ubyte": ("lab", n_test),
    }
    for stem, (kind, n) in sets.items():
        path = directory / stem
        if kind == "img":
            data = rng.integers(0, 256, size=(n, rows, cols), dtype=np.uint8)
            write_idx_images(path, data)
        else:
            data = np.arange(n, dtype=np.uint8) % 10
            write_idx_labels(path, data)
        if compress_train and stem.startswith("train"):
            path.with_suffix(".gz").write_bytes(
                gzip.compress(path.read_bytes()))
            path.unlink()
    return root


@pytest.fixture
def tiny_data_dir(tmp_path):
    """Directory holding a small synthetic 'mnist' in IDX layout."""
    return write_idx_dataset(tmp_path / "data", "mnist")
