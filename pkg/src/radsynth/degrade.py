"""Two-stage degradation chain for building paired SR training data.

Stage one models acquisition artifacts (photon noise, then block-transform
compression); stage two models processing artifacts (blur, then additive
Gaussian noise). A Lanczos downscale by the recipe's scale factor at the
very end produces the low-resolution partner. A weighted pool of recipes
gives drawn pairs a varied corruption mix across scales 2, 3 and 4.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np
from scipy.fft import dctn, idctn
from scipy.ndimage import convolve1d

from .errors import ConfigError, DataError
from .grid import ImageGrid, Resolution, resize_lanczos

# Baseline luminance quantization table (quality 50), row-major 8x8.
_LUMA_BASE = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.float64,
)


def quant_table(quality: int) -> np.ndarray:
    if not 1 <= quality <= 100:
        raise ConfigError(f"quality must be in [1, 100], got {quality}")
    scale = 5000.0 / quality if quality < 50 else 200.0 - 2.0 * quality
    tbl = np.floor((_LUMA_BASE * scale + 50.0) / 100.0)
    return np.clip(tbl, 1.0, 255.0)


def poisson_noise(grid: ImageGrid, scale: float, rng: np.random.Generator) -> ImageGrid:
    """Photon-count noise: p -> Poisson(scale * p) / scale."""
    if scale <= 0:
        raise ConfigError(f"poisson scale must be positive, got {scale}")
    counts = rng.poisson(grid.data * scale)
    return ImageGrid(np.clip(counts / scale, 0.0, 1.0))


def gaussian_noise(grid: ImageGrid, sigma: float, rng: np.random.Generator) -> ImageGrid:
    if sigma < 0:
        raise ConfigError(f"noise sigma must be nonnegative, got {sigma}")
    if sigma == 0:
        return grid
    return ImageGrid(np.clip(grid.data + rng.normal(0.0, sigma, grid.data.shape), 0.0, 1.0))


def gaussian_blur(grid: ImageGrid, sigma: float, kernel: int | None = None) -> ImageGrid:
    """Separable normalized Gaussian blur, edge-clamped. sigma = 0 is identity.

    kernel is the full tap count (odd, >= 3); default covers +/- 3 sigma.
    """
    if sigma < 0:
        raise ConfigError(f"blur sigma must be nonnegative, got {sigma}")
    if sigma == 0:
        return grid
    if kernel is None:
        kernel = 2 * max(int(np.ceil(3.0 * sigma)), 1) + 1
    if kernel % 2 == 0 or kernel < 3:
        raise ConfigError(f"kernel must be odd and >= 3, got {kernel}")
    radius = kernel // 2
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    k = k / k.sum()
    out = convolve1d(grid.data, k, axis=0, mode="nearest")
    out = convolve1d(out, k, axis=1, mode="nearest")
    return ImageGrid(np.clip(out, 0.0, 1.0))


def jpeg_compress(grid: ImageGrid, quality: int) -> ImageGrid:
    """Luminance-only block codec round trip: 8x8 DCT, quantize, reconstruct.

    Grayscale input only; edges pad by replication to a block multiple and
    the result is cropped back. Quantization runs on levels x*255 - 128;
    no bitstream is produced since only the distortion matters here.
    """
    if grid.channels != 1:
        raise DataError("block codec expects grayscale input")
    data = grid.data
    h, w = data.shape
    pad_h = (-h) % 8
    pad_w = (-w) % 8
    padded = np.pad(data, ((0, pad_h), (0, pad_w)), mode="edge")
    levels = padded * 255.0 - 128.0

    tbl = quant_table(quality)
    ph, pw = levels.shape
    blocks = levels.reshape(ph // 8, 8, pw // 8, 8).transpose(0, 2, 1, 3)
    coef = dctn(blocks, axes=(2, 3), norm="ortho")
    coef = np.round(coef / tbl) * tbl
    rec = idctn(coef, axes=(2, 3), norm="ortho")
    out = rec.transpose(0, 2, 1, 3).reshape(ph, pw)
    out = (out + 128.0) / 255.0
    return ImageGrid(np.clip(out[:h, :w], 0.0, 1.0))


@dataclass(frozen=True)
class DegradationRecipe:
    """Knob settings for one pair draw. None disables an optional stage."""

    scale: int
    poisson_scale: float | None = None
    jpeg_quality: int | None = None
    blur_sigma: float = 0.0
    blur_kernel: int | None = None
    gauss_sigma: float = 0.0
    seed: int | None = None

    def __post_init__(self):
        if self.scale not in (2, 3, 4):
            raise ConfigError(f"scale must be 2, 3 or 4, got {self.scale}")
        if self.poisson_scale is not None and self.poisson_scale <= 0:
            raise ConfigError("poisson_scale must be positive when set")
        if self.jpeg_quality is not None and not 1 <= self.jpeg_quality <= 100:
            raise ConfigError("jpeg_quality must be in [1, 100] when set")
        if self.blur_kernel is not None and (self.blur_kernel % 2 == 0 or self.blur_kernel < 3):
            raise ConfigError("blur_kernel must be odd and >= 3 when set")
        if self.blur_sigma < 0 or self.gauss_sigma < 0:
            raise ConfigError("sigmas must be nonnegative")

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if value is not None:
                lines.append(f"{f.name}={value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "DegradationRecipe":
        from .config import parse_config_text

        raw = parse_config_text(text)
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown recipe keys: {sorted(unknown)}")
        kwargs: dict = {}
        for key, value in raw.items():
            if key in ("scale", "jpeg_quality", "blur_kernel", "seed"):
                kwargs[key] = int(value)
            else:
                kwargs[key] = float(value)
        return cls(**kwargs)


def degrade(grid: ImageGrid, recipe: DegradationRecipe, rng: np.random.Generator) -> ImageGrid:
    """Both corruption stages at full resolution, order fixed."""
    out = grid
    if recipe.poisson_scale is not None:
        out = poisson_noise(out, recipe.poisson_scale, rng)
    if recipe.jpeg_quality is not None:
        out = jpeg_compress(out, recipe.jpeg_quality)
    if recipe.blur_sigma > 0:
        out = gaussian_blur(out, recipe.blur_sigma, recipe.blur_kernel)
    if recipe.gauss_sigma > 0:
        out = gaussian_noise(out, recipe.gauss_sigma, rng)
    return out


def degrade_pair(
    hr: ImageGrid, recipe: DegradationRecipe, rng: np.random.Generator
) -> tuple[ImageGrid, ImageGrid]:
    """(hr, lr) training pair. The downscale happens last, after all corruption."""
    if hr.width % recipe.scale or hr.height % recipe.scale:
        raise DataError(
            f"image {hr.width}x{hr.height} not divisible by scale {recipe.scale}"
        )
    corrupted = degrade(hr, recipe, rng)
    target = Resolution(hr.width // recipe.scale, hr.height // recipe.scale)
    return hr, resize_lanczos(corrupted, target)


@dataclass
class PairPool:
    """Weighted recipe mix. Weights normalize to sum 1 at construction."""

    recipes: list[DegradationRecipe]
    weights: list[float]
    capacity: int = 0

    def __post_init__(self):
        if not self.recipes:
            raise ConfigError("pool needs at least one recipe")
        if len(self.recipes) != len(self.weights):
            raise ConfigError("recipes and weights must align")
        if any(w <= 0 for w in self.weights):
            raise ConfigError("weights must be positive")
        total = float(sum(self.weights))
        self.weights = [w / total for w in self.weights]

    def draw(self, rng: np.random.Generator) -> DegradationRecipe:
        idx = rng.choice(len(self.recipes), p=np.asarray(self.weights))
        return self.recipes[int(idx)]


def pool_draw(
    pool: PairPool, hr_corpus: list[ImageGrid], rng: np.random.Generator
) -> tuple[ImageGrid, ImageGrid]:
    """Recipe by weight, image uniformly, then one degraded pair."""
    if not hr_corpus:
        raise DataError("empty corpus")
    recipe = pool.draw(rng)
    hr = hr_corpus[int(rng.integers(len(hr_corpus)))]
    return degrade_pair(hr, recipe, rng)


def default_pool(scales: tuple[int, ...] = (2, 3, 4)) -> PairPool:
    """Mild-to-strong corruption mixed over the requested scales."""
    recipes = []
    weights = []
    for scale in scales:
        recipes.append(DegradationRecipe(scale=scale, blur_sigma=0.8, gauss_sigma=0.01))
        weights.append(1.0)
        recipes.append(
            DegradationRecipe(
                scale=scale,
                poisson_scale=200.0,
                jpeg_quality=55,
                blur_sigma=1.2,
                gauss_sigma=0.03,
            )
        )
        weights.append(1.0)
    return PairPool(recipes=recipes, weights=weights)
