"""Forward noising and reverse (DDPM / DDIM) sampling over a pluggable noise predictor.

The process runs in a symmetric model domain: unit intensities are mapped
x -> 2x - 1 on the way in and clamped back to [0, 1] on the way out. All
arrays here are plain float64 ndarrays; `ImageGrid` appears only at the
entry and exit points. A leading batch axis is supported throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .errors import NumericError
from .grid import ImageGrid, Resolution, pixel_stats
from .schedules import NoiseSchedule, ddim_subsequence


class NoisePredictor(Protocol):
    """Noise-prediction contract: eps_hat = predict(x_t, t), same shape as x_t.

    `x_t` is a model-domain array of shape (H, W) or (N, H, W); `t` is an
    integer timestep. Implementations must be deterministic for fixed inputs
    and parameters.
    """

    def predict(self, x_t: np.ndarray, t: int) -> np.ndarray: ...


@dataclass(frozen=True)
class SamplerConfig:
    eta: float = 0.0
    inference_steps: int = 250
    clip_denoised: bool = True

    def __post_init__(self):
        if self.eta < 0.0:
            raise ValueError(f"eta must be >= 0, got {self.eta}")
        if self.inference_steps < 1:
            raise ValueError("inference_steps must be positive")


def to_model_domain(x01: np.ndarray) -> np.ndarray:
    return 2.0 * np.asarray(x01, dtype=np.float64) - 1.0


def to_unit_domain(x: np.ndarray) -> np.ndarray:
    return np.clip((np.asarray(x) + 1.0) / 2.0, 0.0, 1.0)


def _as_unit_array(x0) -> np.ndarray:
    return x0.data if isinstance(x0, ImageGrid) else np.asarray(x0, dtype=np.float64)


def forward_noise(x0, t: int, sched: NoiseSchedule, rng: np.random.Generator):
    """Noise a clean image to timestep t: x_t = sqrt(ab)*x0 + sqrt(1-ab)*eps.

    `x0` is unit-domain (ImageGrid or array) and is mapped to the model domain
    internally. Returns (x_t, eps), both model-domain arrays.
    """
    if not 1 <= t <= sched.T:
        raise ValueError(f"timestep {t} outside [1, {sched.T}]")
    x0m = to_model_domain(_as_unit_array(x0))
    eps = rng.standard_normal(x0m.shape)
    ab = sched.alpha_bar(t)
    return np.sqrt(ab) * x0m + np.sqrt(1.0 - ab) * eps, eps


def ddim_sigma(sched: NoiseSchedule, t: int, t_prev: int, eta: float) -> float:
    """Stochasticity scale for the jump t -> t_prev; zero when eta is zero."""
    if eta == 0.0:
        return 0.0
    ab_t = sched.alpha_bar(t)
    ab_p = sched.alpha_bar(t_prev)
    return eta * np.sqrt((1.0 - ab_p) / (1.0 - ab_t)) * np.sqrt(1.0 - ab_t / ab_p)


def ddim_step(x_t: np.ndarray, t: int, t_prev: int, eps_hat: np.ndarray,
              sched: NoiseSchedule, cfg: SamplerConfig,
              rng: np.random.Generator | None = None) -> np.ndarray:
    """One reverse jump t -> t_prev: rebuild x0_hat from eps_hat, re-project.

    With eta = 0 the step is deterministic and the rng is never consulted.
    """
    if not (sched.T >= t > t_prev >= 0):
        raise ValueError(f"need T >= t > t_prev >= 0, got t={t}, t_prev={t_prev}")
    if eps_hat.shape != x_t.shape:
        raise ValueError(f"eps_hat shape {eps_hat.shape} != x_t shape {x_t.shape}")
    ab_t = sched.alpha_bar(t)
    ab_p = sched.alpha_bar(t_prev)
    x0_hat = (x_t - np.sqrt(1.0 - ab_t) * eps_hat) / np.sqrt(ab_t)
    if cfg.clip_denoised:
        x0_hat = np.clip(x0_hat, -1.0, 1.0)
    sigma = ddim_sigma(sched, t, t_prev, cfg.eta)
    radicand = 1.0 - ab_p - sigma**2
    if radicand < -1e-12:
        raise NumericError(
            f"sigma^2={sigma**2:.6g} exceeds 1 - alpha_bar({t_prev})={1.0 - ab_p:.6g}"
        )
    out = np.sqrt(ab_p) * x0_hat + np.sqrt(max(radicand, 0.0)) * eps_hat
    if sigma > 0.0:
        if rng is None:
            raise ValueError("eta > 0 requires an rng")
        out = out + sigma * rng.standard_normal(x_t.shape)
    return out


def ddpm_step(x_t: np.ndarray, t: int, eps_hat: np.ndarray, sched: NoiseSchedule,
              rng: np.random.Generator) -> np.ndarray:
    """Ancestral posterior step t -> t-1 with variance beta_t*(1-ab_{t-1})/(1-ab_t)."""
    if not 1 <= t <= sched.T:
        raise ValueError(f"timestep {t} outside [1, {sched.T}]")
    if eps_hat.shape != x_t.shape:
        raise ValueError(f"eps_hat shape {eps_hat.shape} != x_t shape {x_t.shape}")
    beta_t = sched.beta(t)
    alpha_t = 1.0 - beta_t
    ab_t = sched.alpha_bar(t)
    ab_prev = sched.alpha_bar(t - 1)
    mean = (x_t - beta_t / np.sqrt(1.0 - ab_t) * eps_hat) / np.sqrt(alpha_t)
    var = beta_t * (1.0 - ab_prev) / (1.0 - ab_t)
    if var > 0.0:
        mean = mean + np.sqrt(var) * rng.standard_normal(x_t.shape)
    return mean


def sample_batch(pred: NoisePredictor, sched: NoiseSchedule, cfg: SamplerConfig,
                 shape: Resolution, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n samples as a (n, H, W) model-domain array (no display mapping).

    Starts from standard normal noise and walks the uniformly strided timestep
    subsequence in reverse with DDIM jumps.
    """
    if cfg.inference_steps > sched.T:
        raise ValueError(f"inference_steps {cfg.inference_steps} exceeds T={sched.T}")
    ts = ddim_subsequence(sched.T, cfg.inference_steps)
    x = rng.standard_normal((n, shape.height, shape.width))
    for i in range(len(ts) - 1, -1, -1):
        t = ts[i]
        t_prev = ts[i - 1] if i > 0 else 0
        eps_hat = pred.predict(x, t)
        x = ddim_step(x, t, t_prev, eps_hat, sched, cfg, rng)
    return x


def sample(pred: NoisePredictor, sched: NoiseSchedule, cfg: SamplerConfig,
           shape: Resolution, rng: np.random.Generator) -> ImageGrid:
    """Draw one image, mapped back to unit intensities and clamped."""
    x = sample_batch(pred, sched, cfg, shape, 1, rng)
    return ImageGrid(to_unit_domain(x[0]))


class AnalyticGaussianPredictor:
    """Bayes-optimal noise predictor for x0 ~ N(mu, s2 * I) in the model domain.

    Follows from joint Gaussianity of (x_t, eps) under the forward process:
    E[eps | x_t] = sqrt(1-ab) * (x_t - sqrt(ab)*mu) / (ab*s2 + 1 - ab).
    Serves as an exactly checkable oracle for the sampler; with s2 = 0 the
    implied x0_hat equals mu at every step.
    """

    def __init__(self, mu: np.ndarray, s2: float, sched: NoiseSchedule):
        if s2 < 0.0:
            raise ValueError(f"s2 must be >= 0, got {s2}")
        self.mu = np.asarray(mu, dtype=np.float64)
        self.s2 = float(s2)
        self.sched = sched

    def predict(self, x_t: np.ndarray, t: int) -> np.ndarray:
        ab = self.sched.alpha_bar(t)
        denom = ab * self.s2 + 1.0 - ab
        return np.sqrt(1.0 - ab) * (x_t - np.sqrt(ab) * self.mu) / denom


def analytic_gaussian_predictor(mu: np.ndarray, s2: float,
                                sched: NoiseSchedule) -> AnalyticGaussianPredictor:
    """Build the analytic oracle bound to a schedule; `mu` is model-domain."""
    return AnalyticGaussianPredictor(mu, s2, sched)


def noising_diagnostics(x0, sched: NoiseSchedule, probe_ts, rng: np.random.Generator):
    """Display-mapped (t, mean, std) rows across probe timesteps.

    The t=0 row reproduces the clean image's statistics; at t=T the mean
    approaches 0.5 because the display-mapped image is pure noise.
    """
    rows = []
    for t in probe_ts:
        if t == 0:
            x_disp = _as_unit_array(x0)
        else:
            x_t, _ = forward_noise(x0, int(t), sched, rng)
            x_disp = to_unit_domain(x_t)
        mean, std, _, _ = pixel_stats(ImageGrid(x_disp))
        rows.append((int(t), mean, std))
    return rows
