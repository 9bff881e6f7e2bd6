"""Dataset ingestion: IDX-format image/label files (the MNIST container)
and a deterministic synthetic multi-class dataset for CI-scale runs.

Feature rows are always scaled to [0, 1]. Gzipped IDX files are handled
transparently.
"""

from __future__ import annotations

import gzip
import hashlib
import os
import struct
from dataclasses import dataclass

import numpy as np

from .core import InvalidInputError

__all__ = [
    "Dataset",
    "IdxFormatError",
    "dataset_fingerprint",
    "load_idx_images",
    "load_idx_labels",
    "load_mnist",
    "synthetic_dataset",
]

_IMAGE_MAGIC = 0x00000803
_LABEL_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    """An IDX file has a bad magic number or is truncated."""


@dataclass(frozen=True)
class Dataset:
    """Feature matrix in [0, 1] with integer class labels."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if features.ndim != 2 or labels.ndim != 1:
            raise InvalidInputError("features must be 2-d and labels 1-d")
        if features.shape[0] != labels.shape[0]:
            raise InvalidInputError(
                f"{features.shape[0]} feature rows but {labels.shape[0]} labels"
            )
        if features.size and (features.min() < 0.0 or features.max() > 1.0):
            raise InvalidInputError("features must be scaled to [0, 1]")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1 if len(self) else 0


def _read_file(path: str) -> bytes:
    with open(path, "rb") as fh:
        head = fh.read(2)
        fh.seek(0)
        if head == b"\x1f\x8b":
            return gzip.decompress(fh.read())
        return fh.read()


def load_idx_images(path: str) -> np.ndarray:
    """Parse an IDX image file into a float matrix scaled to [0, 1]."""
    raw = _read_file(path)
    if len(raw) < 16:
        raise IdxFormatError(f"{path}: truncated header")
    magic, count, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != _IMAGE_MAGIC:
        raise IdxFormatError(f"{path}: bad magic 0x{magic:08x}, expected 0x{_IMAGE_MAGIC:08x}")
    expected = count * rows * cols
    body = np.frombuffer(raw, dtype=np.uint8, offset=16)
    if body.size != expected:
        raise IdxFormatError(
            f"{path}: expected {expected} pixels, found {body.size}"
        )
    return body.reshape(count, rows * cols).astype(np.float64) / 255.0


def load_idx_labels(path: str) -> np.ndarray:
    """Parse an IDX label file into an int vector."""
    raw = _read_file(path)
    if len(raw) < 8:
        raise IdxFormatError(f"{path}: truncated header")
    magic, count = struct.unpack(">II", raw[:8])
    if magic != _LABEL_MAGIC:
        raise IdxFormatError(f"{path}: bad magic 0x{magic:08x}, expected 0x{_LABEL_MAGIC:08x}")
    body = np.frombuffer(raw, dtype=np.uint8, offset=8)
    if body.size != count:
        raise IdxFormatError(f"{path}: expected {count} labels, found {body.size}")
    return body.astype(np.int64)


_MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def _find(directory: str, stem: str) -> str:
    for name in (stem, stem + ".gz", stem.replace("-idx", ".idx")):
        path = os.path.join(directory, name)
        if os.path.exists(path):
            return path
    raise FileNotFoundError(f"no {stem}[.gz] under {directory}")


def load_mnist(directory: str) -> tuple[Dataset, Dataset]:
    """Load the four standard IDX files from ``directory`` as (train, test)."""
    splits = []
    for split in ("train", "test"):
        image_stem, label_stem = _MNIST_FILES[split]
        features = load_idx_images(_find(directory, image_stem))
        labels = load_idx_labels(_find(directory, label_stem))
        if features.shape[0] != labels.shape[0]:
            raise IdxFormatError(
                f"{split}: {features.shape[0]} images but {labels.shape[0]} labels"
            )
        splits.append(Dataset(features, labels))
    return splits[0], splits[1]


def synthetic_dataset(
    classes: int = 10,
    dims: int = 784,
    train_size: int = 60000,
    test_size: int = 10000,
    seed: int = 7,
    spread: float = 0.22,
) -> tuple[Dataset, Dataset]:
    """Deterministic Gaussian-blob classification data for CI runs.

    Each class has a fixed mean vector in [0.25, 0.75]^dims; samples add
    isotropic noise of scale ``spread`` and are clamped to the unit cube.
    The same (classes, dims, sizes, seed, spread) always produces the same
    bytes, so results are reproducible and hashable.
    """
    if classes < 2 or dims < 1 or train_size < classes or test_size < classes:
        raise InvalidInputError("degenerate synthetic dataset spec")
    rng = np.random.default_rng(seed)
    means = rng.uniform(0.25, 0.75, size=(classes, dims))

    def draw(count: int) -> tuple[np.ndarray, np.ndarray]:
        labels = rng.integers(0, classes, size=count)
        features = means[labels] + rng.normal(0.0, spread, size=(count, dims))
        return np.clip(features, 0.0, 1.0), labels

    train = Dataset(*draw(train_size))
    test = Dataset(*draw(test_size))
    return train, test


def dataset_fingerprint(data: Dataset) -> str:
    """SHA-256 over the dataset's bytes, for reproducibility checks."""
    digest = hashlib.sha256()
    digest.update(np.ascontiguousarray(data.features).tobytes())
    digest.update(np.ascontiguousarray(data.labels).tobytes())
    return digest.hexdigest()
