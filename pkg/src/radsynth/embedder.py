"""Fixed deterministic feature maps for distribution metrics.

Desk-scale stand-ins for a pretrained vision backbone: a seeded random
projection of a downsampled image for Frechet-style comparisons, and a
seeded linear softmax head for split-based score computations. Both are
frozen at construction, so repeated evaluations of the same images give
identical features.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError
from .grid import ImageGrid, Resolution, resize_lanczos


class ToyEmbedder:
    """Grayscale -> Lanczos thumbnail -> fixed Gaussian random projection."""

    def __init__(self, dim: int = 64, thumb_w: int = 8, thumb_h: int = 4, seed: int = 7):
        if dim < 1 or thumb_w < 1 or thumb_h < 1:
            raise DataError("embedder dimensions must be positive")
        self.dim = dim
        self.thumb = Resolution(thumb_w, thumb_h)
        rng = np.random.Generator(np.random.Philox(seed))
        n_pix = thumb_w * thumb_h
        self.proj = rng.normal(0.0, 1.0 / np.sqrt(n_pix), (dim, n_pix))

    def embed_one(self, grid: ImageGrid) -> np.ndarray:
        small = resize_lanczos(grid.to_gray(), self.thumb)
        return self.proj @ small.data.ravel()

    def embed(self, grids: list[ImageGrid]) -> np.ndarray:
        if not grids:
            raise DataError("no images to embed")
        return np.stack([self.embed_one(g) for g in grids])


class ToyClassifier:
    """Softmax head over ToyEmbedder features, frozen random weights."""

    def __init__(self, n_classes: int = 10, seed: int = 11, embedder: ToyEmbedder | None = None):
        if n_classes < 2:
            raise DataError("need at least two classes")
        self.embedder = embedder if embedder is not None else ToyEmbedder()
        rng = np.random.Generator(np.random.Philox(seed))
        self.weight = rng.normal(0.0, 1.0, (n_classes, self.embedder.dim))
        self.bias = rng.normal(0.0, 0.1, n_classes)

    def predict_proba(self, grids: list[ImageGrid]) -> np.ndarray:
        feats = self.embedder.embed(grids)
        logits = feats @ self.weight.T + self.bias
        logits -= logits.max(axis=1, keepdims=True)
        expl = np.exp(logits)
        return expl / expl.sum(axis=1, keepdims=True)
