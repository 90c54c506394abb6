"""Image substrate: unit-interval pixel grids, PNG I/O, Lanczos resampling.

Intensities live in [0, 1] as float64; integer sample formats exist only at
the PNG boundary. Grayscale arrays are (H, W), color arrays are (H, W, 3).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image


@dataclass(frozen=True)
class Resolution:
    width: int
    height: int

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"resolution must be positive, got {self.width}x{self.height}")


@dataclass(frozen=True)
class ImageGrid:
    """Validated pixel container. `data` is float64 in [0, 1], shape (H, W) or (H, W, 3)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 3 and arr.shape[2] == 1:
            arr = arr[:, :, 0]
        if arr.ndim not in (2, 3) or (arr.ndim == 3 and arr.shape[2] != 3):
            raise ValueError(f"grid shape must be (H, W) or (H, W, 3), got {arr.shape}")
        if arr.size == 0:
            raise ValueError("grid must be non-empty")
        if not np.all(np.isfinite(arr)):
            raise ValueError("grid contains non-finite values")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("grid intensities must lie in [0, 1]")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else 3

    @property
    def resolution(self) -> Resolution:
        return Resolution(width=self.width, height=self.height)

    def to_gray(self) -> "ImageGrid":
        """Channel-average a color grid; identity for grayscale."""
        if self.channels == 1:
            return self
        return ImageGrid(self.data.mean(axis=2))


def load_png(path) -> ImageGrid:
    """Decode a PNG into unit-interval intensities (integer sample / type max).

    8-bit samples divide by 255, 16-bit by 65535. Grayscale files yield a
    2-D grid; RGB files a 3-channel grid; alpha channels are dropped.
    """
    with Image.open(path) as im:
        im.load()
        mode = im.mode
        if mode == "P":
            im = im.convert("RGB")
            mode = "RGB"
        if mode in ("LA", "RGBA"):
            im = im.convert(mode[:-1])
            mode = im.mode
        arr = np.asarray(im)
    if mode in ("I;16", "I"):
        data = arr.astype(np.float64) / 65535.0
    elif mode in ("L", "RGB"):
        data = arr.astype(np.float64) / 255.0
    else:
        raise ValueError(f"unsupported PNG mode {mode!r} in {path}")
    return ImageGrid(np.clip(data, 0.0, 1.0))


def save_png(grid: ImageGrid, path, bit_depth: int = 8) -> None:
    """Quantize to `bit_depth` samples (round half away from zero) and write a PNG.

    16-bit output is grayscale-only; the pipeline never produces 16-bit color.
    """
    if bit_depth not in (8, 16):
        raise ValueError(f"bit_depth must be 8 or 16, got {bit_depth}")
    maxv = (1 << bit_depth) - 1
    # intensities are >= 0, so floor(x + 0.5) is round-half-away-from-zero
    samples = np.floor(grid.data * maxv + 0.5)
    if bit_depth == 8:
        im = Image.fromarray(samples.astype(np.uint8))
    else:
        if grid.channels != 1:
            raise ValueError("16-bit PNG output supports grayscale grids only")
        im = Image.fromarray(samples.astype(np.uint16))
    im.save(path, format="PNG")


def _lanczos_axis_weights(n_in: int, n_out: int, lobes: int):
    """Sample indices and normalized Lanczos weights for one axis.

    Downscaling widens the kernel by the scale factor; source indices are
    edge-clamped. Returns (idx, w) of shape (n_out, taps).
    """
    scale = n_in / n_out
    support_scale = max(scale, 1.0)
    radius = lobes * support_scale
    centers = (np.arange(n_out) + 0.5) * scale - 0.5
    left = np.ceil(centers - radius).astype(np.int64)
    taps = int(np.floor(2.0 * radius)) + 1
    idx = left[:, None] + np.arange(taps)[None, :]
    x = (idx - centers[:, None]) / support_scale
    w = np.sinc(x) * np.sinc(x / lobes)
    w[np.abs(x) >= lobes] = 0.0
    w /= w.sum(axis=1, keepdims=True)
    return np.clip(idx, 0, n_in - 1), w


def resize_lanczos(grid: ImageGrid, target: Resolution, lobes: int = 3) -> ImageGrid:
    """Separable Lanczos-windowed sinc resampling, edge-clamped, output clamped to [0, 1]."""
    if lobes < 2:
        raise ValueError(f"lobes must be >= 2, got {lobes}")
    data = grid.data if grid.channels == 3 else grid.data[:, :, None]
    out = _resample_array(data, target.height, target.width, lobes)
    out = np.clip(out, 0.0, 1.0)
    return ImageGrid(out if grid.channels == 3 else out[:, :, 0])


def resample_array(data: np.ndarray, out_h: int, out_w: int, lobes: int = 3) -> np.ndarray:
    """Lanczos resampling on a raw (H, W) float array, without range clamping."""
    if out_h <= 0 or out_w <= 0:
        raise ValueError("target size must be positive")
    return _resample_array(data[:, :, None], out_h, out_w, lobes)[:, :, 0]


def _resample_array(data: np.ndarray, out_h: int, out_w: int, lobes: int) -> np.ndarray:
    h, w, _ = data.shape
    idx_r, w_r = _lanczos_axis_weights(h, out_h, lobes)
    data = np.einsum("ot,otwc->owc", w_r, data[idx_r])
    idx_c, w_c = _lanczos_axis_weights(w, out_w, lobes)
    data = np.einsum("ot,hotc->hoc", w_c, data[:, idx_c])
    return data


def crop(grid: ImageGrid, x0: int, y0: int, w: int, h: int) -> ImageGrid:
    """Exact pixel copy of the rectangle [x0, x0+w) x [y0, y0+h)."""
    if w <= 0 or h <= 0:
        raise ValueError("crop size must be positive")
    if x0 < 0 or y0 < 0 or x0 + w > grid.width or y0 + h > grid.height:
        raise ValueError(
            f"crop rectangle ({x0},{y0},{w},{h}) exceeds grid {grid.width}x{grid.height}"
        )
    return ImageGrid(grid.data[y0 : y0 + h, x0 : x0 + w])


def pixel_stats(grid: ImageGrid):
    """Population (mean, std, min, max) over all samples."""
    d = grid.data
    return float(d.mean()), float(d.std()), float(d.min()), float(d.max())
