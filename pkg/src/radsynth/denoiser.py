"""Trainable noise predictor: a small encoder/decoder net with residual
blocks, one self-attention stage at the lowest resolution, and a learned
per-timestep embedding.

Training uses L1 noise loss, AdamW with global-norm gradient clipping, and
an EMA shadow whose coefficient follows the cosine ramp. A finite-difference
gradient checker doubles as the correctness oracle for backpropagation.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import NumericError
from .grid import ImageGrid
from .schedules import EmaSchedule, NoiseSchedule, ema_gamma


def _norm(ch: int) -> nn.GroupNorm:
    return nn.GroupNorm(min(8, ch), ch)


class ResBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, time_dim: int):
        super().__init__()
        self.norm1 = _norm(in_ch)
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.time_proj = nn.Linear(time_dim, out_ch)
        self.norm2 = _norm(out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.skip = nn.Conv2d(in_ch, out_ch, 1) if in_ch != out_ch else nn.Identity()

    def forward(self, x, temb):
        h = self.conv1(F.silu(self.norm1(x)))
        # inject after norm2: a per-channel shift placed before a per-channel
        # GroupNorm would be normalized away exactly
        h = F.silu(self.norm2(h)) + self.time_proj(temb)[:, :, None, None]
        return self.conv2(h) + self.skip(x)


class SelfAttention2d(nn.Module):
    def __init__(self, ch: int, heads: int = 2):
        super().__init__()
        if ch % heads:
            raise ValueError(f"channels {ch} not divisible by heads {heads}")
        self.heads = heads
        self.norm = _norm(ch)
        self.qkv = nn.Conv2d(ch, 3 * ch, 1)
        self.out = nn.Conv2d(ch, ch, 1)

    def forward(self, x):
        n, c, h, w = x.shape
        qkv = self.qkv(self.norm(x)).reshape(n, 3, self.heads, c // self.heads, h * w)
        q, k, v = qkv.unbind(dim=1)
        attn = torch.softmax(q.transpose(-2, -1) @ k / (c // self.heads) ** 0.5, dim=-1)
        out = (v @ attn.transpose(-2, -1)).reshape(n, c, h, w)
        return x + self.out(out)


class ToyDenoiser(nn.Module):
    """Predicts the noise component of x_t; widths increase down the encoder."""

    def __init__(
        self,
        total_steps: int,
        widths: tuple[int, ...] = (16, 32, 64),
        time_dim: int = 64,
        in_channels: int = 1,
    ):
        super().__init__()
        if len(widths) < 2 or any(a >= b for a, b in zip(widths, widths[1:])):
            raise ValueError(f"widths must be strictly increasing, got {widths}")
        self.total_steps = total_steps
        self.depth = len(widths)
        self.time_table = nn.Embedding(total_steps, time_dim)
        self.time_mlp = nn.Sequential(
            nn.Linear(time_dim, time_dim), nn.SiLU(), nn.Linear(time_dim, time_dim)
        )
        self.stem = nn.Conv2d(in_channels, widths[0], 3, padding=1)

        self.down_blocks = nn.ModuleList()
        self.downsamples = nn.ModuleList()
        for i, w in enumerate(widths[:-1]):
            self.down_blocks.append(ResBlock(w, w, time_dim))
            self.downsamples.append(nn.Conv2d(w, widths[i + 1], 3, stride=2, padding=1))

        bottom = widths[-1]
        self.mid1 = ResBlock(bottom, bottom, time_dim)
        self.attn = SelfAttention2d(bottom)
        self.mid2 = ResBlock(bottom, bottom, time_dim)

        self.upsamples = nn.ModuleList()
        self.up_blocks = nn.ModuleList()
        for i in range(self.depth - 2, -1, -1):
            self.upsamples.append(nn.Conv2d(widths[i + 1], widths[i], 3, padding=1))
            self.up_blocks.append(ResBlock(2 * widths[i], widths[i], time_dim))

        self.head_norm = _norm(widths[0])
        self.head = nn.Conv2d(widths[0], in_channels, 3, padding=1)
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)

    def forward(self, x: torch.Tensor, t: torch.Tensor) -> torch.Tensor:
        div = 2 ** (self.depth - 1)
        if x.shape[-1] % div or x.shape[-2] % div:
            raise ValueError(f"spatial dims {tuple(x.shape[-2:])} not divisible by {div}")
        if torch.any(t < 1) or torch.any(t > self.total_steps):
            raise ValueError("timesteps must lie in [1, T]")
        temb = self.time_mlp(self.time_table(t - 1))

        h = self.stem(x)
        skips = []
        for block, down in zip(self.down_blocks, self.downsamples):
            h = block(h, temb)
            skips.append(h)
            h = down(h)
        h = self.mid2(self.attn(self.mid1(h, temb)), temb)
        for up, block in zip(self.upsamples, self.up_blocks):
            h = up(F.interpolate(h, scale_factor=2, mode="nearest"))
            h = block(torch.cat([h, skips.pop()], dim=1), temb)
        return self.head(F.silu(self.head_norm(h)))


@dataclass
class EmaState:
    """Shadow copy of a model plus the coefficient ramp it follows."""

    shadow: nn.Module
    schedule: EmaSchedule

    @classmethod
    def of(cls, model: nn.Module, schedule: EmaSchedule) -> "EmaState":
        shadow = copy.deepcopy(model)
        for p in shadow.parameters():
            p.requires_grad_(False)
        return cls(shadow=shadow, schedule=schedule)


def ema_update(ema: EmaState, model: nn.Module, k: int) -> None:
    """shadow <- gamma_k * shadow + (1 - gamma_k) * live, per weight."""
    gamma = ema_gamma(k, ema.schedule)
    with torch.no_grad():
        for s, p in zip(ema.shadow.parameters(), model.parameters()):
            if s.shape != p.shape:
                raise ValueError("EMA shadow shape mismatch")
            s.mul_(gamma).add_(p.detach(), alpha=1.0 - gamma)


@dataclass
class TrainState:
    model: ToyDenoiser
    opt: torch.optim.Optimizer
    ema: EmaState
    clip_norm: float = 1.0
    step: int = 0
    history: list[tuple[int, float, float, float]] = field(default_factory=list)

    @classmethod
    def initialize(
        cls,
        model: ToyDenoiser,
        ema_schedule: EmaSchedule,
        lr: float = 1e-4,
        weight_decay: float = 1e-2,
        clip_norm: float = 1.0,
    ) -> "TrainState":
        opt = torch.optim.AdamW(model.parameters(), lr=lr, betas=(0.9, 0.999),
                                weight_decay=weight_decay)
        return cls(model=model, opt=opt, ema=EmaState.of(model, ema_schedule),
                   clip_norm=clip_norm)


def batch_to_model_tensor(batch: list[ImageGrid], dtype=torch.float32) -> torch.Tensor:
    arr = np.stack([g.to_gray().data for g in batch])
    return torch.as_tensor(arr * 2.0 - 1.0, dtype=dtype).unsqueeze(1)


def denoise_loss(
    model: ToyDenoiser,
    x0: torch.Tensor,
    t: torch.Tensor,
    eps: torch.Tensor,
    sched: NoiseSchedule,
) -> torch.Tensor:
    """Mean absolute noise-prediction error on x_t built from (x0, t, eps)."""
    abar = torch.as_tensor(
        [sched.alpha_bar(int(ti)) for ti in t], dtype=x0.dtype
    ).view(-1, 1, 1, 1)
    x_t = torch.sqrt(abar) * x0 + torch.sqrt(1.0 - abar) * eps
    return (model(x_t, t) - eps).abs().mean()


def _apply_update(state: TrainState, loss: torch.Tensor) -> float:
    value = float(loss.detach())
    if not np.isfinite(value):
        raise NumericError(f"non-finite training loss at step {state.step}: {value}")
    if state.clip_norm == 0:
        # Zero clip threshold zeroes every gradient; skip the whole update so
        # decoupled weight decay cannot move the weights either.
        state.history.append((state.step, value, 0.0, ema_gamma(
            min(state.step, state.ema.schedule.K), state.ema.schedule)))
        return value
    state.opt.zero_grad(set_to_none=True)
    loss.backward()
    grad_norm = float(torch.nn.utils.clip_grad_norm_(
        state.model.parameters(), state.clip_norm))
    state.opt.step()
    state.step += 1
    k = min(state.step, state.ema.schedule.K)
    ema_update(state.ema, state.model, k)
    state.history.append((state.step, value, grad_norm, ema_gamma(k, state.ema.schedule)))
    return value


def train_step(
    state: TrainState,
    batch: list[ImageGrid],
    sched: NoiseSchedule,
    rng: np.random.Generator,
) -> float:
    """One optimization step: sample t and noise per item, L1 loss, update."""
    if not batch:
        raise ValueError("empty batch")
    x0 = batch_to_model_tensor(batch)
    n = x0.shape[0]
    t = torch.as_tensor(rng.integers(1, sched.T + 1, n))
    eps = torch.as_tensor(rng.standard_normal(x0.shape), dtype=x0.dtype)
    loss = denoise_loss(state.model, x0, t, eps, sched)
    return _apply_update(state, loss)


def train_step_fixed(
    state: TrainState,
    x0: torch.Tensor,
    t: torch.Tensor,
    eps: torch.Tensor,
    sched: NoiseSchedule,
) -> float:
    """Update on a caller-pinned (x0, t, eps) triple; used by overfit probes."""
    return _apply_update(state, denoise_loss(state.model, x0, t, eps, sched))


class TorchPredictor:
    """Adapter exposing a trained torch model through the array predict contract."""

    def __init__(self, model: nn.Module):
        self.model = model
        self.model.eval()

    def predict(self, x_t: np.ndarray, t: int) -> np.ndarray:
        single = x_t.ndim == 2
        arr = x_t[None] if single else x_t
        with torch.no_grad():
            dtype = next(self.model.parameters()).dtype
            xt = torch.tensor(np.ascontiguousarray(arr), dtype=dtype).unsqueeze(1)
            ts = torch.full((xt.shape[0],), t, dtype=torch.int64)
            out = self.model(xt, ts).squeeze(1).numpy().astype(np.float64)
        return out[0] if single else out


def finite_diff_max_rel_err(
    model: nn.Module,
    loss_fn,
    epsilon: float = 1e-4,
    n_weights: int = 120,
    seed: int = 0,
) -> float:
    """Max relative error of autograd vs central differences on random weights.

    loss_fn() must evaluate the current parameters to a scalar tensor. The
    relative-error denominator is floored at 1e-3 times the largest probed
    analytic gradient so near-zero coordinates cannot dominate.
    """
    if not 1e-6 <= epsilon <= 1e-3:
        raise ValueError(f"epsilon {epsilon} outside [1e-6, 1e-3]")
    params = [p for p in model.parameters() if p.requires_grad]
    model.zero_grad(set_to_none=True)
    loss_fn().backward()
    analytic = [p.grad.detach().clone() for p in params]

    # Round-robin across parameter tensors so one large table (the time
    # embedding, whose unused rows have exactly zero gradient) cannot soak
    # up every probe.
    rng = np.random.Generator(np.random.Philox(seed))
    total = sum(p.numel() for p in params)
    budget = min(n_weights, total)
    picked: list[tuple[int, int]] = []
    seen = [set() for _ in params]
    pi = 0
    while len(picked) < budget:
        p = params[pi % len(params)]
        if len(seen[pi % len(params)]) < p.numel():
            while True:
                local = int(rng.integers(p.numel()))
                if local not in seen[pi % len(params)]:
                    break
            seen[pi % len(params)].add(local)
            picked.append((pi % len(params), local))
        pi += 1

    probes = []
    with torch.no_grad():
        for pi, local in picked:
            flat = params[pi].view(-1)
            orig = float(flat[local])
            flat[local] = orig + epsilon
            hi = float(loss_fn())
            flat[local] = orig - epsilon
            lo = float(loss_fn())
            flat[local] = orig
            fd = (hi - lo) / (2.0 * epsilon)
            probes.append((fd, float(analytic[pi].view(-1)[local])))

    an = np.array([a for _, a in probes])
    fd = np.array([f for f, _ in probes])
    floor = max(1e-3 * np.abs(an).max(), 1e-12)
    return float((np.abs(fd - an) / np.maximum(np.abs(an), floor)).max())


def grad_check(
    model: ToyDenoiser,
    probe: tuple[torch.Tensor, torch.Tensor, torch.Tensor],
    sched: NoiseSchedule,
    epsilon: float = 1e-4,
    n_weights: int = 120,
    seed: int = 0,
) -> float:
    """Gradient check on the smoothed-L1 surrogate at a fixed (x0, t, eps) probe.

    Runs in float64; the smoothing (delta = 1e-8) exists only to make the
    objective differentiable at exact zeros for the oracle.
    """
    x0, t, eps = probe
    model = model.double()
    if not torch.is_tensor(x0):
        x0 = batch_to_model_tensor([x0] if isinstance(x0, ImageGrid) else x0)
    if not torch.is_tensor(t):
        t = torch.as_tensor([t] if np.isscalar(t) else t, dtype=torch.long)
    if not torch.is_tensor(eps):
        eps = torch.as_tensor(np.asarray(eps, dtype=np.float64)).view_as(x0)
    x0 = x0.double()
    eps = eps.double()
    delta = 1e-8

    def loss_fn():
        abar = torch.as_tensor(
            [sched.alpha_bar(int(ti)) for ti in t], dtype=torch.float64
        ).view(-1, 1, 1, 1)
        x_t = torch.sqrt(abar) * x0 + torch.sqrt(1.0 - abar) * eps
        diff = model(x_t, t) - eps
        return torch.sqrt(diff * diff + delta * delta).mean()

    return finite_diff_max_rel_err(model, loss_fn, epsilon, n_weights, seed)
