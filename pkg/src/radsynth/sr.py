"""Hybrid-attention super-resolution generator and spectrally normalized
U-Net discriminator.

The generator stacks residual groups of windowed self-attention blocks
(each with channel gating and a feed-forward stage) closed by one
overlapping cross-attention block, then upsamples by pixel shuffle.
Attention primitives are exposed as standalone functions on channel-last
tensors so their mechanics are testable in isolation.
"""

from __future__ import annotations

import contextlib

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .grid import ImageGrid


@dataclass(frozen=True)
class SRGeneratorConfig:
    embed_dim: int = 32
    window: int = 4
    overlap_ratio: float = 0.5
    n_groups: int = 2
    blocks_per_group: int = 2
    heads: int = 2
    scale: int = 4
    max_side: int = 1024
    use_oca: bool = True

    def __post_init__(self):
        if self.embed_dim % self.heads:
            raise ValueError(f"embed_dim {self.embed_dim} not divisible by {self.heads} heads")
        if not 0.0 <= self.overlap_ratio < 1.0:
            raise ValueError(f"overlap_ratio must be in [0, 1), got {self.overlap_ratio}")
        if self.scale not in (2, 3, 4):
            raise ValueError(f"scale must be 2, 3 or 4, got {self.scale}")
        if min(self.window, self.n_groups, self.blocks_per_group, self.heads) < 1:
            raise ValueError("window, groups, blocks and heads must be positive")


@dataclass(frozen=True)
class DiscriminatorConfig:
    base_channels: int = 16
    depth: int = 2
    sn_power_iters: int = 1

    def __post_init__(self):
        if self.depth < 2:
            raise ValueError(f"depth must be >= 2, got {self.depth}")
        if self.sn_power_iters < 1:
            raise ValueError("need at least one power iteration")


def window_partition(x: torch.Tensor, window: int) -> tuple[torch.Tensor, tuple[int, int]]:
    """(B, H, W, C) -> (B*nWin, window*window, C) tiles plus the padded size.

    Non-divisible grids pad by edge replication; window_merge crops back.
    """
    b, h, w, c = x.shape
    pad_h = (-h) % window
    pad_w = (-w) % window
    if pad_h or pad_w:
        x = F.pad(x.permute(0, 3, 1, 2), (0, pad_w, 0, pad_h), mode="replicate")
        x = x.permute(0, 2, 3, 1)
    hp, wp = h + pad_h, w + pad_w
    x = x.view(b, hp // window, window, wp // window, window, c)
    tiles = x.permute(0, 1, 3, 2, 4, 5).reshape(-1, window * window, c)
    return tiles, (hp, wp)


def window_merge(
    windows: torch.Tensor, window: int, padded_hw: tuple[int, int], out_hw: tuple[int, int]
) -> torch.Tensor:
    hp, wp = padded_hw
    c = windows.shape[-1]
    b = windows.shape[0] // ((hp // window) * (wp // window))
    x = windows.view(b, hp // window, wp // window, window, window, c)
    x = x.permute(0, 1, 3, 2, 4, 5).reshape(b, hp, wp, c)
    return x[:, : out_hw[0], : out_hw[1], :]


def scaled_dot_attention(
    q: torch.Tensor, k: torch.Tensor, v: torch.Tensor, heads: int
) -> torch.Tensor:
    """Multi-head attention over token sequences (N, L, C); no projections."""
    n, lq, c = q.shape
    if c % heads:
        raise ValueError(f"channel dim {c} not divisible by {heads} heads")
    d = c // heads
    qh = q.view(n, lq, heads, d).transpose(1, 2)
    kh = k.view(n, k.shape[1], heads, d).transpose(1, 2)
    vh = v.view(n, v.shape[1], heads, d).transpose(1, 2)
    attn = torch.softmax(qh @ kh.transpose(-2, -1) / d**0.5, dim=-1)
    return (attn @ vh).transpose(1, 2).reshape(n, lq, c)


def window_attention(windows: torch.Tensor, heads: int) -> torch.Tensor:
    """Self-attention within each window tile independently."""
    return scaled_dot_attention(windows, windows, windows, heads)


def overlapping_cross_attention(
    x: torch.Tensor, window: int, overlap_ratio: float, heads: int
) -> torch.Tensor:
    """Queries from plain windows, keys/values from windows enlarged by
    round(overlap_ratio * window) pixels per side, edge-clamped.

    overlap_ratio 0 reduces exactly to window_attention on partitions.
    """
    if not 0.0 <= overlap_ratio < 1.0:
        raise ValueError(f"overlap_ratio must be in [0, 1), got {overlap_ratio}")
    b, h, w, c = x.shape
    q, (hp, wp) = window_partition(x, window)
    margin = int(round(overlap_ratio * window))
    if margin == 0:
        out = window_attention(q, heads)
        return window_merge(out, window, (hp, wp), (h, w))

    # Pad to the window multiple, then by the overlap margin on every side.
    xp = F.pad(x.permute(0, 3, 1, 2), (0, (-w) % window, 0, (-h) % window), mode="replicate")
    xp = F.pad(xp, (margin, margin, margin, margin), mode="replicate")
    kv_win = window + 2 * margin
    patches = F.unfold(xp, kernel_size=kv_win, stride=window)
    n_win = patches.shape[-1]
    kv = patches.view(b, c, kv_win * kv_win, n_win).permute(0, 3, 2, 1)
    kv = kv.reshape(b * n_win, kv_win * kv_win, c)
    out = scaled_dot_attention(q, kv, kv, heads)
    return window_merge(out, window, (hp, wp), (h, w))


class ChannelGate(nn.Module):
    """Squeeze-and-excite gate: global average pool -> bottleneck -> sigmoid."""

    def __init__(self, dim: int, reduction: int = 4):
        super().__init__()
        hidden = max(dim // reduction, 1)
        self.fc1 = nn.Linear(dim, hidden)
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        s = torch.sigmoid(self.fc2(F.silu(self.fc1(x.mean(dim=(1, 2))))))
        return x * s[:, None, None, :]


class HybridBlock(nn.Module):
    """Windowed self-attention with channel gating, then a feed-forward stage."""

    def __init__(self, dim: int, window: int, heads: int, ffn_ratio: int = 2):
        super().__init__()
        self.window = window
        self.heads = heads
        self.norm1 = nn.LayerNorm(dim)
        self.qkv = nn.Linear(dim, 3 * dim)
        self.gate = ChannelGate(dim)
        self.proj = nn.Linear(dim, dim)
        self.norm2 = nn.LayerNorm(dim)
        self.ffn = nn.Sequential(
            nn.Linear(dim, ffn_ratio * dim), nn.SiLU(), nn.Linear(ffn_ratio * dim, dim)
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, h, w, c = x.shape
        q, k, v = self.qkv(self.norm1(x)).chunk(3, dim=-1)
        qw, (hp, wp) = window_partition(q, self.window)
        kw, _ = window_partition(k, self.window)
        vw, _ = window_partition(v, self.window)
        a = scaled_dot_attention(qw, kw, vw, self.heads)
        a = window_merge(a, self.window, (hp, wp), (h, w))
        x = x + self.proj(self.gate(a))
        return x + self.ffn(self.norm2(x))


class OCABlock(nn.Module):
    def __init__(self, dim: int, window: int, overlap_ratio: float, heads: int):
        super().__init__()
        self.window = window
        self.overlap_ratio = overlap_ratio
        self.heads = heads
        self.norm = nn.LayerNorm(dim)
        self.mix = nn.Linear(dim, dim)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.mix(self.norm(x))
        a = overlapping_cross_attention(h, self.window, self.overlap_ratio, self.heads)
        return x + self.proj(a)


class RHAG(nn.Module):
    """Residual group: hybrid blocks, one overlapping cross-attention block,
    a convolution, and the residual add of the group input."""

    def __init__(self, cfg: SRGeneratorConfig):
        super().__init__()
        self.blocks = nn.ModuleList(
            HybridBlock(cfg.embed_dim, cfg.window, cfg.heads)
            for _ in range(cfg.blocks_per_group)
        )
        self.oca = (
            OCABlock(cfg.embed_dim, cfg.window, cfg.overlap_ratio, cfg.heads)
            if cfg.use_oca
            else None
        )
        self.conv = nn.Conv2d(cfg.embed_dim, cfg.embed_dim, 3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = x
        for block in self.blocks:
            y = block(y)
        if self.oca is not None:
            y = self.oca(y)
        y = self.conv(y.permute(0, 3, 1, 2)).permute(0, 2, 3, 1)
        return x + y


def pixel_shuffle_upsample(features: torch.Tensor, scale: int) -> torch.Tensor:
    """(B, C*s^2, H, W) -> (B, C, s*H, s*W), channels placed in raster order."""
    if scale < 1:
        raise ValueError(f"scale must be >= 1, got {scale}")
    if scale == 1:
        return features
    if features.shape[1] % (scale * scale):
        raise ValueError(
            f"{features.shape[1]} channels not divisible by scale^2 = {scale * scale}"
        )
    return F.pixel_shuffle(features, scale)


class SRGenerator(nn.Module):
    def __init__(self, cfg: SRGeneratorConfig, in_channels: int = 1):
        super().__init__()
        self.cfg = cfg
        self.shallow = nn.Conv2d(in_channels, cfg.embed_dim, 3, padding=1)
        self.groups = nn.ModuleList(RHAG(cfg) for _ in range(cfg.n_groups))
        self.body_conv = nn.Conv2d(cfg.embed_dim, cfg.embed_dim, 3, padding=1)
        self.pre_shuffle = nn.Conv2d(
            cfg.embed_dim, cfg.embed_dim * cfg.scale**2, 3, padding=1
        )
        self.reconstruct = nn.Conv2d(cfg.embed_dim, in_channels, 3, padding=1)

    def forward(self, lr: torch.Tensor) -> torch.Tensor:
        if max(lr.shape[-2:]) * self.cfg.scale > self.cfg.max_side:
            raise ValueError(
                f"input {tuple(lr.shape[-2:])} upscaled by {self.cfg.scale} exceeds "
                f"max side {self.cfg.max_side}"
            )
        feat = self.shallow(lr)
        y = feat.permute(0, 2, 3, 1)
        for group in self.groups:
            y = group(y)
        y = self.body_conv(y.permute(0, 3, 1, 2)) + feat
        y = pixel_shuffle_upsample(self.pre_shuffle(y), self.cfg.scale)
        return self.reconstruct(y)


def sr_forward(gen: SRGenerator, lr: ImageGrid) -> ImageGrid:
    """Upscale one image; output clamped to [0, 1]."""
    with torch.no_grad():
        dtype = next(gen.parameters()).dtype
        x = torch.as_tensor(lr.to_gray().data.copy(), dtype=dtype)[None, None]
        out = gen(x)[0, 0].numpy().astype(np.float64)
    return ImageGrid(np.clip(out, 0.0, 1.0))


def spectral_normalize(
    weight: torch.Tensor, n_power_iters: int, state: tuple[torch.Tensor, torch.Tensor],
    update_state: bool = True,
) -> torch.Tensor:
    """weight / sigma_max, the top singular value estimated by power iteration.

    state = (u, v) persists across calls so the estimate converges over
    training. An all-zero matrix is returned unchanged (sigma treated as 1).
    update_state=False evaluates with the stored vectors untouched, making the
    map a pure function of the weight (needed by finite-difference probes).
    """
    if n_power_iters < 1:
        raise ValueError("need at least one power iteration")
    u, v = state
    w2d = weight.reshape(weight.shape[0], -1)
    if not torch.any(w2d != 0):
        return weight
    with torch.no_grad():
        if update_state:
            for _ in range(n_power_iters):
                v.copy_(F.normalize(w2d.T @ u, dim=0, eps=1e-12))
                u.copy_(F.normalize(w2d @ v, dim=0, eps=1e-12))
        # Clone so later in-place buffer updates (a second forward in the
        # same step) cannot corrupt this graph's saved tensors.
        u_s, v_s = u.clone(), v.clone()
    sigma = u_s @ w2d @ v_s
    return weight / sigma


class SNConv2d(nn.Module):
    """Conv2d whose weight is spectrally normalized before every forward."""

    def __init__(self, in_ch: int, out_ch: int, kernel: int, stride: int = 1,
                 padding: int = 0, n_power_iters: int = 1):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, kernel, stride=stride, padding=padding)
        self.n_power_iters = n_power_iters
        self.freeze_state = False
        w2d = self.conv.weight.reshape(out_ch, -1)
        self.register_buffer("u", F.normalize(torch.randn(w2d.shape[0]), dim=0))
        self.register_buffer("v", F.normalize(torch.randn(w2d.shape[1]), dim=0))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        w = spectral_normalize(self.conv.weight, self.n_power_iters, (self.u, self.v),
                               update_state=not self.freeze_state)
        return F.conv2d(x, w, self.conv.bias, stride=self.conv.stride,
                        padding=self.conv.padding)


@contextlib.contextmanager
def frozen_power_iteration(module: nn.Module):
    """Pin every SNConv2d's (u, v) inside the block so repeated forwards are
    reproducible pure functions of the weights."""
    layers = [m for m in module.modules() if isinstance(m, SNConv2d)]
    before = [m.freeze_state for m in layers]
    for m in layers:
        m.freeze_state = True
    try:
        yield module
    finally:
        for m, b in zip(layers, before):
            m.freeze_state = b


class UNetDiscriminator(nn.Module):
    """Per-pixel realness logits at input resolution; every conv is
    spectrally normalized. Smooth activations keep gradients well behaved."""

    def __init__(self, cfg: DiscriminatorConfig, in_channels: int = 1):
        super().__init__()
        self.cfg = cfg
        it = cfg.sn_power_iters
        ch = [cfg.base_channels * 2**i for i in range(cfg.depth + 1)]
        self.stem = SNConv2d(in_channels, ch[0], 3, padding=1, n_power_iters=it)
        self.down = nn.ModuleList(
            SNConv2d(ch[i], ch[i + 1], 4, stride=2, padding=1, n_power_iters=it)
            for i in range(cfg.depth)
        )
        self.up = nn.ModuleList(
            SNConv2d(ch[i + 1], ch[i], 3, padding=1, n_power_iters=it)
            for i in reversed(range(cfg.depth))
        )
        self.head = SNConv2d(ch[0], 1, 3, padding=1, n_power_iters=it)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        div = 2**self.cfg.depth
        if x.shape[-1] % div or x.shape[-2] % div:
            raise ValueError(f"spatial dims {tuple(x.shape[-2:])} not divisible by {div}")
        h = F.silu(self.stem(x))
        skips = []
        for down in self.down:
            skips.append(h)
            h = F.silu(down(h))
        for up in self.up:
            h = F.interpolate(h, scale_factor=2, mode="nearest")
            h = F.silu(up(h)) + skips.pop()
        return self.head(h)


def discriminator_forward(disc: UNetDiscriminator, image: ImageGrid) -> torch.Tensor:
    dtype = next(disc.parameters()).dtype
    x = torch.as_tensor(image.to_gray().data.copy(), dtype=dtype)[None, None]
    with torch.no_grad():
        return disc(x)[0, 0]
