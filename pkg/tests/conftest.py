import os
import struct

import numpy as np
import pytest


def write_idx_images(path, images_u8):
    """images_u8: (N, rows, cols) uint8."""
    n, rows, cols = images_u8.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">iiii", 2051, n, rows, cols))
        f.write(np.ascontiguousarray(images_u8, dtype=np.uint8).tobytes())


def write_idx_labels(path, labels_u8):
    with open(path, "wb") as f:
        f.write(struct.pack(">ii", 2049, len(labels_u8)))
        f.write(np.ascontiguousarray(labels_u8, dtype=np.uint8).tobytes())


def mnist_dir():
    """Directory with the four standard IDX files, or None.

    Checked in order: $BLOCKCIRC_MNIST_DIR, ./data/mnist.
    """
    candidates = []
    env = os.environ.get("BLOCKCIRC_MNIST_DIR")
    if env:
        candidates.append(env)
    candidates.append(os.path.join(os.path.dirname(__file__), "..", "data", "mnist"))
    for d in candidates:
        if all(os.path.exists(os.path.join(d, f)) for f in
               ("train-images-idx3-ubyte", "train-labels-idx1-ubyte",
                "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")):
            return d
    return None


@pytest.fixture
def idx_fixture(tmp_path):
    """A 4-image IDX pair with known contents."""
    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, size=(4, 28, 28), dtype=np.uint8)
    images[0, 0, 0] = 255
    labels = np.array([3, 1, 4, 1], dtype=np.uint8)
    ipath = tmp_path / "images-idx3-ubyte"
    lpath = tmp_path / "labels-idx1-ubyte"
    write_idx_images(ipath, images)
    write_idx_labels(lpath, labels)
    return ipath, lpath, images, labels
