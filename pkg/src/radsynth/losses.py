"""SR training objective: pixel L1, perceptual distance over a pluggable
feature extractor, adversarial terms in stabilized log-sigmoid form, and
the weighted total, plus the two-player training step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np
import torch
import torch.nn.functional as F

from .degrade import PairPool, pool_draw
from .errors import NumericError
from .grid import ImageGrid
from .sr import SRGenerator, UNetDiscriminator


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 0.1

    def __post_init__(self):
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.lambda1 == self.lambda2 == self.lambda3 == 0:
            raise ValueError("at least one loss weight must be positive")


class FeatureExtractor(Protocol):
    def embed(self, image: torch.Tensor) -> list[torch.Tensor]: ...


class IdentityExtractor:
    """phi = id; reduces the perceptual distance to mean squared pixel error."""

    def embed(self, image: torch.Tensor) -> list[torch.Tensor]:
        return [image]


class ToyFeatureExtractor:
    """Three fixed random-weight conv+downsample stages, seed-pinned.

    Stands in for a pretrained backbone: weights are frozen at construction
    and shared across calls, so the distance is deterministic.
    """

    def __init__(self, in_channels: int = 1, seed: int = 23):
        gen = torch.Generator().manual_seed(seed)
        chans = [in_channels, 8, 16, 32]
        self.kernels = []
        for cin, cout in zip(chans, chans[1:]):
            w = torch.randn((cout, cin, 3, 3), generator=gen) / (3.0 * cin**0.5)
            self.kernels.append(w)

    def embed(self, image: torch.Tensor) -> list[torch.Tensor]:
        feats = []
        h = image
        for w in self.kernels:
            h = F.silu(F.conv2d(h, w.to(h.dtype), stride=2, padding=1))
            feats.append(h)
        return feats


def _as_tensor(img) -> torch.Tensor:
    if isinstance(img, torch.Tensor):
        return img
    if isinstance(img, ImageGrid):
        return torch.as_tensor(img.to_gray().data.copy())[None, None]
    return torch.as_tensor(np.array(img, dtype=np.float64))


def l1_loss(gen, gt) -> torch.Tensor:
    a, b = _as_tensor(gen), _as_tensor(gt)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")
    return (a - b).abs().mean()


def perceptual_loss(phi: FeatureExtractor, gen, gt) -> torch.Tensor:
    """Per-layer mean squared feature difference, summed over layers."""
    a, b = _as_tensor(gen), _as_tensor(gt)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")
    total = None
    for fa, fb in zip(phi.embed(a), phi.embed(b)):
        term = (fa - fb).pow(2).mean()
        total = term if total is None else total + term
    return total


def gan_loss_discriminator(d_real: torch.Tensor, d_fake: torch.Tensor) -> torch.Tensor:
    """-E[log sigmoid(d_real)] - E[log(1 - sigmoid(d_fake))], map-averaged."""
    return F.softplus(-d_real).mean() + F.softplus(d_fake).mean()


def gan_loss_generator(d_fake: torch.Tensor) -> torch.Tensor:
    """Non-saturating form: -E[log sigmoid(d_fake)]."""
    return F.softplus(-d_fake).mean()


def total_loss(w: LossWeights, l1, lp, lg) -> torch.Tensor:
    return w.lambda1 * l1 + w.lambda2 * lp + w.lambda3 * lg


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB for unit-range images."""
    ta, tb = _as_tensor(a).double(), _as_tensor(b).double()
    mse = float(((ta - tb) ** 2).mean())
    if mse == 0:
        return float("inf")
    return float(10.0 * np.log10(1.0 / mse))


@dataclass(frozen=True)
class StepLosses:
    l1: float
    lp: float
    lg: float
    total: float
    d_loss: float

    @property
    def g_loss(self) -> float:
        return self.total


def adversarial_step_on_batch(
    gen: SRGenerator,
    disc: UNetDiscriminator,
    hr: torch.Tensor,
    lr: torch.Tensor,
    w: LossWeights,
    g_opt: torch.optim.Optimizer,
    d_opt: torch.optim.Optimizer,
    phi: FeatureExtractor,
) -> StepLosses:
    """One discriminator update, then one generator update.

    With lambda3 = 0 the generator step never touches the discriminator, so
    it reduces to supervised training.
    """
    if w.lambda3 > 0:
        with torch.no_grad():
            fake = gen(lr)
        d_loss = gan_loss_discriminator(disc(hr), disc(fake))
        d_opt.zero_grad(set_to_none=True)
        d_loss.backward()
        d_opt.step()
        d_value = float(d_loss.detach())
    else:
        d_value = 0.0

    fake = gen(lr)
    l1 = l1_loss(fake, hr)
    lp = perceptual_loss(phi, fake, hr) if w.lambda2 > 0 else torch.zeros(())
    lg = gan_loss_generator(disc(fake)) if w.lambda3 > 0 else torch.zeros(())
    g_loss = total_loss(w, l1, lp, lg)
    value = float(g_loss.detach())
    if not np.isfinite(value) or not np.isfinite(d_value):
        raise NumericError(
            f"non-finite adversarial losses: g={value}, d={d_value}, "
            f"components=({float(l1.detach()):.4g}, {float(lp.detach()):.4g}, "
            f"{float(lg.detach()):.4g})"
        )
    g_opt.zero_grad(set_to_none=True)
    g_loss.backward()
    g_opt.step()
    return StepLosses(
        l1=float(l1.detach()), lp=float(lp.detach()), lg=float(lg.detach()),
        total=value, d_loss=d_value,
    )


def adversarial_train_step(
    gen: SRGenerator,
    disc: UNetDiscriminator,
    pool: PairPool,
    corpus: list[ImageGrid],
    w: LossWeights,
    g_opt: torch.optim.Optimizer,
    d_opt: torch.optim.Optimizer,
    phi: FeatureExtractor,
    rng: np.random.Generator,
    batch_size: int = 2,
) -> StepLosses:
    """Draw a batch of degraded pairs from the pool and take one
    adversarial step on it. All pairs in a batch share one scale (the
    generator's), so recipes with other scales are rejected here."""
    hrs, lrs = [], []
    for _ in range(batch_size):
        hr, lr = pool_draw(pool, corpus, rng)
        if hr.width != lr.width * gen.cfg.scale:
            raise ValueError(
                f"pool produced scale {hr.width // lr.width}, generator wants {gen.cfg.scale}"
            )
        hrs.append(hr.data)
        lrs.append(lr.data)
    dtype = next(gen.parameters()).dtype
    hr_t = torch.as_tensor(np.stack(hrs), dtype=dtype).unsqueeze(1)
    lr_t = torch.as_tensor(np.stack(lrs), dtype=dtype).unsqueeze(1)
    return adversarial_step_on_batch(gen, disc, hr_t, lr_t, w, g_opt, d_opt, phi)
