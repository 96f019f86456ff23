"""Big-endian IDX image/label file parsing and writing.

Image files carry magic 0x00000803 (unsigned bytes, 3 dims after the count);
label files carry 0x00000801. Pixels are scaled from uint8 to [0, 1].
"""

from __future__ import annotations

import struct

import numpy as np

from .data import LabeledDataset
from .errors import CountMismatch, MalformedFile

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


def _read_exact(fh, n: int, path) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise MalformedFile(f"{path}: truncated file")
    return buf


def read_idx_images(path) -> np.ndarray:
    """Returns (N, H, W) uint8 pixel array."""
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise MalformedFile(f"cannot open {path}: {exc}") from exc
    with fh:
        magic, n, h, w = struct.unpack(">IIII", _read_exact(fh, 16, path))
        if magic != IMAGE_MAGIC:
            raise MalformedFile(f"{path}: bad image magic 0x{magic:08x}")
        data = _read_exact(fh, n * h * w, path)
        if fh.read(1):
            raise MalformedFile(f"{path}: trailing bytes")
    return np.frombuffer(data, dtype=np.uint8).reshape(n, h, w)


def read_idx_labels(path) -> np.ndarray:
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise MalformedFile(f"cannot open {path}: {exc}") from exc
    with fh:
        magic, n = struct.unpack(">II", _read_exact(fh, 8, path))
        if magic != LABEL_MAGIC:
            raise MalformedFile(f"{path}: bad label magic 0x{magic:08x}")
        data = _read_exact(fh, n, path)
        if fh.read(1):
            raise MalformedFile(f"{path}: trailing bytes")
    return np.frombuffer(data, dtype=np.uint8)


def load_idx(images_path, labels_path, num_classes: int | None = None) -> LabeledDataset:
    pixels = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if len(pixels) != len(labels):
        raise CountMismatch(
            f"{len(pixels)} images vs {len(labels)} labels ({images_path}, {labels_path})"
        )
    images = pixels.astype(np.float64)[:, :, :, None] / 255.0
    if num_classes is None:
        num_classes = int(labels.max()) + 1 if len(labels) else 1
    return LabeledDataset(images, labels.astype(np.int64), num_classes)


def write_idx(dataset: LabeledDataset, images_path, labels_path) -> None:
    """Quantizes [0, 1] floats to uint8. Only single-channel stacks supported."""
    n, h, w, c = dataset.images.shape
    if c != 1:
        raise MalformedFile("IDX export supports single-channel images only")
    pixels = np.clip(np.round(dataset.images[:, :, :, 0] * 255.0), 0, 255).astype(np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IMAGE_MAGIC, n, h, w))
        fh.write(pixels.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", LABEL_MAGIC, n))
        fh.write(dataset.labels.astype(np.uint8).tobytes())
