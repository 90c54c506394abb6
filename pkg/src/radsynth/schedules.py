"""Diffusion noise schedules, inference-time subsequences, and the EMA coefficient ramp."""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step betas with derived alphas and cumulative products.

    Arrays are indexed 0..T-1 for timesteps 1..T; `alpha_bar(0)` is defined
    as 1 so the clean image is the t=0 endpoint.
    """

    betas: np.ndarray
    alphas: np.ndarray = field(repr=False)
    alpha_bars: np.ndarray = field(repr=False)
    beta_min: float = 0.0
    beta_max: float = 0.999

    def __post_init__(self):
        b = np.asarray(self.betas, dtype=np.float64)
        if b.ndim != 1 or b.size < 1:
            raise ValueError("betas must be a non-empty 1-D array")
        if self.beta_min < 0.0 or self.beta_max >= 1.0 or self.beta_min >= self.beta_max:
            raise ValueError(f"invalid clip bounds [{self.beta_min}, {self.beta_max}]")
        if b.min() < self.beta_min - 1e-12 or b.max() > self.beta_max + 1e-12:
            raise ValueError("betas violate clip bounds")

    @property
    def T(self) -> int:
        return len(self.betas)

    def alpha_bar(self, t: int) -> float:
        """Cumulative product at timestep t in [0, T], with alpha_bar(0) = 1."""
        if not 0 <= t <= self.T:
            raise ValueError(f"timestep {t} outside [0, {self.T}]")
        return 1.0 if t == 0 else float(self.alpha_bars[t - 1])

    def beta(self, t: int) -> float:
        if not 1 <= t <= self.T:
            raise ValueError(f"timestep {t} outside [1, {self.T}]")
        return float(self.betas[t - 1])

    @classmethod
    def from_betas(cls, betas: np.ndarray, beta_min: float, beta_max: float) -> "NoiseSchedule":
        betas = np.asarray(betas, dtype=np.float64)
        alphas = 1.0 - betas
        return cls(betas=betas, alphas=alphas, alpha_bars=np.cumprod(alphas),
                   beta_min=beta_min, beta_max=beta_max)

    def dump(self) -> str:
        """Plain-text key=value serialization for reproducibility audits."""
        buf = io.StringIO()
        buf.write(f"T={self.T}\n")
        buf.write(f"beta_min={self.beta_min!r}\n")
        buf.write(f"beta_max={self.beta_max!r}\n")
        buf.write("betas=" + ",".join(repr(float(b)) for b in self.betas) + "\n")
        return buf.getvalue()

    @classmethod
    def loads(cls, text: str) -> "NoiseSchedule":
        kv = {}
        for line in text.strip().splitlines():
            key, _, value = line.partition("=")
            kv[key.strip()] = value.strip()
        betas = np.array([float(x) for x in kv["betas"].split(",")])
        return cls.from_betas(betas, float(kv["beta_min"]), float(kv["beta_max"]))


@dataclass(frozen=True)
class EmaSchedule:
    """Cosine ramp of the EMA coefficient from gamma0 at step 0 to 1 at step K."""

    gamma0: float
    K: int

    def __post_init__(self):
        if not 0.0 <= self.gamma0 < 1.0:
            raise ValueError(f"gamma0 must lie in [0, 1), got {self.gamma0}")
        if self.K < 1:
            raise ValueError(f"K must be positive, got {self.K}")


def cosine_schedule(T: int, s: float = 0.008, beta_min: float = 0.0,
                    beta_max: float = 0.999) -> NoiseSchedule:
    """Cosine-squared cumulative schedule; slow noise growth early, fast late.

    Betas are clipped to [beta_min, beta_max] and the cumulative products are
    rebuilt from the clipped betas so the three arrays stay consistent.
    """
    if T < 2:
        raise ValueError(f"T must be >= 2, got {T}")
    if s <= 0.0:
        raise ValueError(f"offset s must be positive, got {s}")
    if not 0.0 <= beta_min < beta_max < 1.0:
        raise ValueError(f"invalid beta bounds [{beta_min}, {beta_max}]")
    t = np.arange(T + 1, dtype=np.float64)
    f = np.cos(((t / T + s) / (1.0 + s)) * (np.pi / 2.0)) ** 2
    abar = f / f[0]
    betas = np.clip(1.0 - abar[1:] / abar[:-1], beta_min, beta_max)
    return NoiseSchedule.from_betas(betas, beta_min, beta_max)


def linear_schedule(T: int, beta_start: float, beta_end: float) -> NoiseSchedule:
    """Linearly interpolated betas from beta_start to beta_end inclusive."""
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise ValueError(f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})")
    betas = np.linspace(beta_start, beta_end, T)
    return NoiseSchedule.from_betas(betas, 0.0, float(beta_end))


def ema_gamma(k: int, schedule: EmaSchedule) -> float:
    """EMA coefficient at training step k: gamma0 at k=0, exactly 1 at k=K."""
    if not 0 <= k <= schedule.K:
        raise ValueError(f"step {k} outside [0, {schedule.K}]")
    return 1.0 - (1.0 - schedule.gamma0) * (np.cos(np.pi * k / schedule.K) + 1.0) / 2.0


def ddim_subsequence(T: int, S: int) -> list[int]:
    """S uniformly strided, strictly increasing timesteps ending at T."""
    if not 1 <= S <= T:
        raise ValueError(f"need 1 <= S <= T, got S={S}, T={T}")
    return [(i * T) // S for i in range(1, S + 1)]
