"""Image/label containers and the bundled synthetic 8x8 digit generator.

Images are numpy arrays of shape (H, W, C), float64, values in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import EmptyDataset, ShapeMismatch


def validate_image(image: np.ndarray) -> np.ndarray:
    """Check an (H, W, C) float image for shape, finiteness and range."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 3:
        raise ShapeMismatch(f"expected (H, W, C) image, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ShapeMismatch("image contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ShapeMismatch("image values outside [0, 1]")
    return arr


@dataclass
class LabeledDataset:
    """A stack of same-shaped images with integer class labels."""

    images: np.ndarray  # (N, H, W, C) float64 in [0, 1]
    labels: np.ndarray  # (N,) int
    num_classes: int

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4:
            raise ShapeMismatch(f"expected (N, H, W, C) stack, got {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise ShapeMismatch("images and labels differ in length")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ShapeMismatch("label outside [0, num_classes)")

    def __len__(self) -> int:
        return len(self.images)

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    @property
    def flat(self) -> np.ndarray:
        """Images flattened to (N, H*W*C)."""
        return self.images.reshape(len(self.images), -1)

    def subset(self, indices) -> "LabeledDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(self.images[idx], self.labels[idx], self.num_classes)

    def split(self, fraction: float, seed: int) -> tuple["LabeledDataset", "LabeledDataset"]:
        """Shuffled two-way split; first part holds `fraction` of the data."""
        rng = np.random.default_rng(seed)
        perm = rng.permutation(len(self))
        cut = int(round(fraction * len(self)))
        return self.subset(perm[:cut]), self.subset(perm[cut:])


# 8x8 glyphs for digits 0-9; '#' = bright pixel.
_GLYPHS = [
    [
        "........",
        "..####..",
        ".#....#.",
        ".#....#.",
        ".#....#.",
        ".#....#.",
        "..####..",
        "........",
    ],
    [
        "........",
        "...##...",
        "..###...",
        "...##...",
        "...##...",
        "...##...",
        "..####..",
        "........",
    ],
    [
        "........",
        "..####..",
        ".#....#.",
        "....##..",
        "...#....",
        "..#.....",
        ".######.",
        "........",
    ],
    [
        "........",
        ".#####..",
        "......#.",
        "...###..",
        "......#.",
        ".#....#.",
        "..####..",
        "........",
    ],
    [
        "........",
        "....##..",
        "...#.#..",
        "..#..#..",
        ".######.",
        ".....#..",
        ".....#..",
        "........",
    ],
    [
        "........",
        ".######.",
        ".#......",
        ".#####..",
        "......#.",
        ".#....#.",
        "..####..",
        "........",
    ],
    [
        "........",
        "..####..",
        ".#......",
        ".#####..",
        ".#....#.",
        ".#....#.",
        "..####..",
        "........",
    ],
    [
        "........",
        ".######.",
        "......#.",
        ".....#..",
        "....#...",
        "...#....",
        "...#....",
        "........",
    ],
    [
        "........",
        "..####..",
        ".#....#.",
        "..####..",
        ".#....#.",
        ".#....#.",
        "..####..",
        "........",
    ],
    [
        "........",
        "..####..",
        ".#....#.",
        ".#....#.",
        "..#####.",
        "......#.",
        "..####..",
        "........",
    ],
]


def _templates() -> np.ndarray:
    out = np.zeros((10, 8, 8), dtype=np.float64)
    for d, rows in enumerate(_GLYPHS):
        for r, row in enumerate(rows):
            for c, ch in enumerate(row):
                if ch == "#":
                    out[d, r, c] = 1.0
    return out


_TEMPLATES = _templates()


def synthetic_digits(n: int, seed: int, noise: float = 0.08) -> LabeledDataset:
    """Generate n jittered 8x8 digit images, deterministic per seed.

    Each sample is a digit template with a random +-1 pixel shift, a light
    Gaussian blur (sigma in [0, 0.7], skipped below 0.05), brightness
    scaling in [0.6, 1.0] and additive Gaussian pixel noise.
    """
    if n < 1:
        raise EmptyDataset("cannot generate an empty dataset")
    rng = np.random.default_rng(seed)
    images = np.zeros((n, 8, 8, 1), dtype=np.float64)
    labels = rng.integers(0, 10, size=n)
    for i in range(n):
        img = _TEMPLATES[labels[i]].copy()
        dy, dx = rng.integers(-1, 2, size=2)
        img = np.roll(img, (dy, dx), axis=(0, 1))
        sigma = rng.uniform(0.0, 0.7)
        if sigma > 0.05:
            img = ndimage.gaussian_filter(img, sigma)
        img *= rng.uniform(0.6, 1.0)
        img += rng.normal(0.0, noise, size=img.shape)
        images[i, :, :, 0] = np.clip(img, 0.0, 1.0)
    return LabeledDataset(images, labels, num_classes=10)


def augment(dataset: LabeledDataset, copies: int, bounds: dict, seed: int) -> LabeledDataset:
    """Append `copies` transformed duplicates of every image to the dataset.

    Each duplicate gets one randomly sampled elementary transform drawn from
    `bounds`. Training on the result makes a model robust to single
    transforms at those strengths without covering their compositions.
    """
    from .transforms import apply, sample_spec

    if copies < 0:
        raise ValueError("copies must be non-negative")
    rng = np.random.default_rng(seed)
    all_images = [dataset.images]
    all_labels = [dataset.labels]
    for _ in range(copies):
        block = np.empty_like(dataset.images)
        for i in range(len(dataset)):
            spec = sample_spec(rng, bounds=bounds)
            block[i] = apply(spec, dataset.images[i], bounds)
        all_images.append(block)
        all_labels.append(dataset.labels)
    return LabeledDataset(
        np.concatenate(all_images), np.concatenate(all_labels), dataset.num_classes
    )
