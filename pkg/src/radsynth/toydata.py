"""Procedural toy corpus: small structured grayscale images for desk-scale runs.

Each image is a dark field with a bright curved band, periodic bumps along
it, and a soft vignette, loosely echoing wide-field radiograph structure.
Nothing downstream depends on the exact recipe, only on the corpus being
structured, varied, and deterministic per seed.
"""

from __future__ import annotations

import numpy as np

from .grid import ImageGrid


def toy_radiograph(height: int, width: int, rng: np.random.Generator) -> ImageGrid:
    y, x = np.mgrid[0:height, 0:width].astype(np.float64)
    y = y / (height - 1) * 2.0 - 1.0 if height > 1 else y
    x = x / (width - 1) * 2.0 - 1.0 if width > 1 else x

    curvature = rng.uniform(0.3, 0.8)
    center_y = rng.uniform(-0.25, 0.15)
    band_w = rng.uniform(0.18, 0.32)
    tooth_freq = rng.uniform(4.0, 7.0)
    tooth_amp = rng.uniform(0.15, 0.35)
    brightness = rng.uniform(0.45, 0.65)
    tilt = rng.uniform(-0.15, 0.15)

    arc = center_y + curvature * x**2 + tilt * x
    band = np.exp(-(((y - arc) / band_w) ** 2))
    teeth = (0.5 + 0.5 * np.cos(tooth_freq * np.pi * x)) * np.exp(
        -(((y - arc + 0.6 * band_w) / (0.5 * band_w)) ** 2)
    )
    vignette = np.exp(-((x / 1.3) ** 2) - ((y / 1.2) ** 2))

    img = 0.08 + brightness * band * vignette + tooth_amp * teeth * vignette
    img = img + rng.normal(0.0, 0.01, img.shape)
    return ImageGrid(np.clip(img, 0.0, 1.0))


def make_corpus(n: int, height: int, width: int, seed: int) -> list[ImageGrid]:
    rng = np.random.Generator(np.random.Philox(seed))
    return [toy_radiograph(height, width, rng) for _ in range(n)]


def noise_grid(height: int, width: int, rng: np.random.Generator) -> ImageGrid:
    """Uniform-noise control image (the pure-noise baseline for metric sanity runs)."""
    return ImageGrid(rng.uniform(0.0, 1.0, (height, width)))
