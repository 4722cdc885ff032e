"""
Synthetic desk-scale datasets
"""

from typing import Optional

import numpy as np

from models.tensor import LabeledDataset, Tensor
from utils.rng import SplitMix64

GLYPH_SIZE = 8

# (rows, cols) lit by each class; none is invariant under a quarter turn
GLYPH_PATTERNS = {
    0: [(2, c) for c in range(1, 7)],  # horizontal bar
    1: [(r, 2) for r in range(1, 7)],  # vertical bar
    2: [(i, i) for i in range(1, 7)],  # diagonal
    3: [(r, c) for r in (5, 6) for c in (5, 6)],  # bottom-right block
}


def make_blobs(
    n: int,
    num_classes: int = 2,
    seed: int = 0,
    std: float = 0.5,
    radius: float = 2.0,
    centers: Optional[np.ndarray] = None,
) -> LabeledDataset:
    """Gaussian blobs in 2-D, centers evenly spaced on a circle"""
    rng = SplitMix64(seed)
    if centers is None:
        angles = 2.0 * np.pi * np.arange(num_classes) / num_classes
        centers = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    centers = np.asarray(centers, dtype=np.float64)
    labels = np.arange(n) % centers.shape[0]
    labels = labels[rng.permutation(n)]
    points = centers[labels] + std * rng.normal(2 * n).reshape(n, 2)
    return LabeledDataset(inputs=Tensor.from_array(points), labels=labels)


def make_glyphs(n: int, seed: int = 0, noise: float = 0.15) -> LabeledDataset:
    """8x8x1 glyph images with intensity jitter and clipped Gaussian noise"""
    rng = SplitMix64(seed)
    num_classes = len(GLYPH_PATTERNS)
    labels = np.arange(n) % num_classes
    labels = labels[rng.permutation(n)]
    images = np.zeros((n, GLYPH_SIZE, GLYPH_SIZE, 1))
    intensity = rng.uniform(0.7, 1.0, n)
    for label, pixels in GLYPH_PATTERNS.items():
        rows = np.nonzero(labels == label)[0]
        for r, c in pixels:
            images[rows, r, c, 0] = intensity[rows]
    images += noise * rng.normal(images.size).reshape(images.shape)
    images = np.clip(images, 0.0, 1.0)
    return LabeledDataset(inputs=Tensor.from_array(images), labels=labels)
