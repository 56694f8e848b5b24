"""IDX image/label ingestion and deterministic batching.

Files may be raw or gzip-compressed; compression is detected from the
two-byte gzip signature, not the file name. Batching is a pure function
of (seed, epoch), so a rerun shuffles identically.
"""
from __future__ import annotations

import gzip
import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049

DATASET_NAMES = ("mnist", "fashion_mnist")
_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


class IdxFormatError(ValueError):
    """The bytes on disk do not follow the IDX layout we expect."""


class DataMissingError(FileNotFoundError):
    """Dataset files absent; message carries a remediation hint."""


def _open_payload(path):
    """Return the full decompressed byte string of a possibly-gzipped file."""
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        return gzip.decompress(raw)
    return raw


def load_idx_images(path):
    """Parse an IDX image file into a float64 (N, rows*cols) array of
    raw 0..255 values."""
    buf = _open_payload(path)
    if len(buf) < 16:
        raise IdxFormatError(f"{path}: header truncated ({len(buf)} bytes)")
    magic, n, rows, cols = struct.unpack(">iiii", buf[:16])
    if magic != IMAGE_MAGIC:
        raise IdxFormatError(
            f"{path}: bad image magic {magic}, expected {IMAGE_MAGIC}")
    need = n * rows * cols
    body = buf[16:]
    if len(body) != need:
        raise IdxFormatError(
            f"{path}: payload holds {len(body)} bytes, header promises {need}")
    pixels = np.frombuffer(body, dtype=np.uint8)
    return pixels.reshape(n, rows * cols).astype(np.float64)


def load_idx_labels(path):
    """Parse an IDX label file into an int64 (N,) array."""
    buf = _open_payload(path)
    if len(buf) < 8:
        raise IdxFormatError(f"{path}: header truncated ({len(buf)} bytes)")
    magic, n = struct.unpack(">ii", buf[:8])
    if magic != LABEL_MAGIC:
        raise IdxFormatError(
            f"{path}: bad label magic {magic}, expected {LABEL_MAGIC}")
    body = buf[8:]
    if len(body) != n:
        raise IdxFormatError(
            f"{path}: payload holds {len(body)} labels, header promises {n}")
    labels = np.frombuffer(body, dtype=np.uint8).astype(np.int64)
    if labels.size and labels.max() > 9:
        log.warning("%s: labels above 9 present (max %d), passing through",
                    path, labels.max())
    return labels


def write_idx_images(path, images):
    """Serialize a uint8 (N, rows, cols) array back to IDX bytes."""
    images = np.ascontiguousarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">iiii", IMAGE_MAGIC, n, rows, cols))
        f.write(images.tobytes())


def write_idx_labels(path, labels):
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">ii", LABEL_MAGIC, labels.shape[0]))
        f.write(labels.tobytes())


def normalize_pixels(x):
    """Map raw 0..255 pixel values to [0, 1]. Refuses input that looks
    already normalized, so the scaling cannot be applied twice."""
    x = np.asarray(x, dtype=np.float64)
    if x.size and x.max() <= 1.0:
        raise ValueError(
            "pixels already in [0, 1]; refusing to normalize twice")
    return x / 255.0


@dataclass
class Dataset:
    name: str
    images: np.ndarray
    labels: np.ndarray
    num_classes: int = 10

    def __len__(self):
        return self.images.shape[0]


def _find(directory, stem):
    for candidate in (directory / stem, directory / (stem + ".gz")):
        if candidate.exists():
            return candidate
    return None


def load_dataset(name, data_dir):
    """Load the train and test splits of a named dataset.

    Expects the four canonical IDX files (optionally gzipped) under
    ``<data_dir>/<name>/``.
    """
    if name not in DATASET_NAMES:
        raise ValueError(
            f"unknown dataset '{name}', expected one of {DATASET_NAMES}")
    directory = Path(data_dir) / name
    missing = []
    found = {}
    for split, (img_stem, lab_stem) in _FILES.items():
        for stem in (img_stem, lab_stem):
            path = _find(directory, stem)
            if path is None:
                missing.append(str(directory / stem))
            else:
                found[stem] = path
    if missing:
        raise DataMissingError(
            "dataset files not found:\n  " + "\n  ".join(missing) +
            f"\nPlace the four IDX files (raw or .gz) under {directory}. "
            "Official distributions ship them under exactly these names.")
    splits = []
    for split, (img_stem, lab_stem) in _FILES.items():
        images = normalize_pixels(load_idx_images(found[img_stem]))
        labels = load_idx_labels(found[lab_stem])
        if images.shape[0] != labels.shape[0]:
            raise IdxFormatError(
                f"{split}: {images.shape[0]} images but "
                f"{labels.shape[0]} labels")
        splits.append(Dataset(name=name, images=images, labels=labels))
    train, test = splits
    if name == "fashion_mnist":
        counts = np.bincount(train.labels, minlength=10)
        if not np.all(counts == 6000):
            log.warning("fashion_mnist train split is unbalanced: %s",
                        counts.tolist())
    return train, test


def batches(dataset, batch_size, seed, epoch):
    """Yield (images, labels) minibatches in a shuffled order that is a
    pure function of (seed, epoch). The final short batch is kept."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    rng = np.random.default_rng((seed, epoch))
    perm = rng.permutation(len(dataset))
    for start in range(0, len(dataset), batch_size):
        take = perm[start:start + batch_size]
        yield dataset.images[take], dataset.labels[take]


@dataclass(frozen=True)
class BatchPlan:
    """Shuffling identity of a training run: seed plus batch size."""
    seed: int
    batch_size: int


def make_batches(dataset, plan, epoch):
    return batches(dataset, plan.batch_size, plan.seed, epoch)
