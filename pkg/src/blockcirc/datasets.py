"""Dataset ingestion: IDX-format image/label files and a synthetic generator.

The IDX reader is bit-exact about the format: big-endian magic (2051 for
images, 2049 for labels), big-endian dimension sizes, unsigned-byte data.
Pixels scale by 1/255 so byte 255 becomes exactly 1.0.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import BadMagic, CountMismatch, TruncatedFile

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049


@dataclass
class DatasetHandle:
    images: np.ndarray     # (N, H, W, 1) in [0, 1] for image data, (N, dim) for synthetic
    labels: np.ndarray     # (N,) class indices
    n_classes: int

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise CountMismatch(
                f"{len(self.images)} samples vs {len(self.labels)} labels")
        if self.labels.size and int(self.labels.max()) >= self.n_classes:
            raise CountMismatch("label outside the declared class range")


def _read_exact(f, n: int, path) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise TruncatedFile(f"{path}: expected {n} more bytes, found {len(buf)}")
    return buf


def _read_header(f, path, expected_magic: int, n_dims: int):
    magic = struct.unpack(">i", _read_exact(f, 4, path))[0]
    if magic != expected_magic:
        hint = ""
        if magic in (IMAGE_MAGIC, LABEL_MAGIC):
            kind = "an image" if magic == IMAGE_MAGIC else "a label"
            hint = f" (this looks like {kind} file)"
        raise BadMagic(f"{path}: magic {magic}, expected {expected_magic}{hint}")
    return struct.unpack(f">{n_dims}i", _read_exact(f, 4 * n_dims, path))


def load_mnist(images_path, labels_path) -> DatasetHandle:
    """Parse an IDX image/label pair into float64 images scaled to [0, 1]."""
    with open(images_path, "rb") as f:
        n, rows, cols = _read_header(f, images_path, IMAGE_MAGIC, 3)
        raw = _read_exact(f, n * rows * cols, images_path)
    images = np.frombuffer(raw, dtype=np.uint8).astype(np.float64) / 255.0
    images = images.reshape(n, rows, cols, 1)
    with open(labels_path, "rb") as f:
        (n_labels,) = _read_header(f, labels_path, LABEL_MAGIC, 1)
        lraw = _read_exact(f, n_labels, labels_path)
    labels = np.frombuffer(lraw, dtype=np.uint8).astype(np.int64)
    if n_labels != n:
        raise CountMismatch(f"{n} images but {n_labels} labels")
    return DatasetHandle(images=images, labels=labels,
                         n_classes=max(10, int(labels.max()) + 1 if n else 10))


def synth_dataset(seed: int, n_per_class: int, classes: int, dim: int,
                  separation: float = 10.0) -> DatasetHandle:
    """Gaussian clusters (unit variance) with class means `separation` apart
    along near-orthogonal directions. Fully determined by the seed;
    separation 0 collapses every class onto the same cloud.
    """
    if classes < 2:
        raise CountMismatch("need at least two classes")
    rng = np.random.default_rng(seed)
    directions = rng.normal(size=(max(dim, classes), classes))
    q, _ = np.linalg.qr(directions)
    means = separation * q[:dim, :].T                      # (classes, dim)
    X = np.concatenate([means[c] + rng.normal(size=(n_per_class, dim))
                        for c in range(classes)])
    y = np.repeat(np.arange(classes, dtype=np.int64), n_per_class)
    return DatasetHandle(images=X, labels=y, n_classes=classes)
