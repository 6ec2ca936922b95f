"""Coupling encoder: convolutional stem, then four stages of strided patch
merging followed by MSFM blocks. Tensors are NCHW."""
from __future__ import annotations

import torch
from torch import nn
import torch.nn.functional as F

from .config import EncoderConfig


class StructuralError(ValueError):
    """Tensor shape or channel count incompatible with the module."""


class LayerNorm2d(nn.Module):
    """LayerNorm over the channel axis of an NCHW tensor."""

    def __init__(self, channels, eps=1e-6):
        super().__init__()
        self.weight = nn.Parameter(torch.ones(channels))
        self.bias = nn.Parameter(torch.zeros(channels))
        self.eps = eps

    def forward(self, x):
        mu = x.mean(1, keepdim=True)
        var = (x - mu).pow(2).mean(1, keepdim=True)
        x = (x - mu) / torch.sqrt(var + self.eps)
        return x * self.weight[:, None, None] + self.bias[:, None, None]


class SimpleGate(nn.Module):
    def forward(self, x):
        a, b = x.chunk(2, dim=1)
        return a * b


class MSFMBlock(nn.Module):
    """Multi-scale feature modeling block.

    out = x + proj(gate(sum_k dwconv_k(expand(norm(x)))))
    """

    def __init__(self, channels, expansion=2, kernel_sizes=(3, 5, 7)):
        super().__init__()
        hidden = channels * expansion
        if hidden % 2:
            raise StructuralError(f"expansion·C = {hidden} must be even for the gate")
        self.channels = channels
        self.norm = LayerNorm2d(channels)
        self.expand = nn.Conv2d(channels, hidden, 1)
        self.branches = nn.ModuleList(
            nn.Conv2d(hidden, hidden, k, padding=k // 2, groups=hidden) for k in kernel_sizes
        )
        self.gate = SimpleGate()
        self.proj = nn.Conv2d(hidden // 2, channels, 1)

    def forward(self, x):
        if x.shape[1] != self.channels:
            raise StructuralError(f"MSFM expects {self.channels} channels, got {x.shape[1]}")
        h = self.expand(self.norm(x))
        h = sum(branch(h) for branch in self.branches)
        return x + self.proj(self.gate(h))


class PatchMerge(nn.Module):
    """Overlapped patch merging: 3×3 window, stride 2, padding 1."""

    def __init__(self, in_channels, out_channels):
        super().__init__()
        self.conv = nn.Conv2d(in_channels, out_channels, 3, stride=2, padding=1)

    def forward(self, x):
        H, W = x.shape[-2:]
        if H % 2 or W % 2:
            raise StructuralError(f"patch merge needs even spatial dims, got {H}×{W}")
        return self.conv(x)


class CouplingEncoder(nn.Module):
    def __init__(self, cfg: EncoderConfig | None = None):
        super().__init__()
        cfg = cfg or EncoderConfig()
        self.cfg = cfg
        C = cfg.channels
        self.stem = nn.Conv2d(3, C[0], 3, padding=1)
        ins = [C[0]] + C[:-1]
        self.downs = nn.ModuleList(PatchMerge(i, o) for i, o in zip(ins, C))
        self.stages = nn.ModuleList(
            nn.Sequential(*(MSFMBlock(c, cfg.expansion, cfg.kernel_sizes) for _ in range(cfg.blocks_per_stage)))
            for c in C
        )

    def forward(self, image):
        """Return ``(stem, [X_1, ..., X_4])``; stage i is H/2^i × W/2^i × C_i."""
        if image.ndim != 4 or image.shape[1] != 3:
            raise StructuralError(f"expected N×3×H×W image batch, got {tuple(image.shape)}")
        H, W = image.shape[-2:]
        d = self.cfg.divisor
        if H % d or W % d:
            raise StructuralError(f"input {H}×{W} not divisible by {d}; pad before encoding")
        x = self.stem(image)
        stem = x
        pyramid = []
        for down, stage in zip(self.downs, self.stages):
            x = stage(down(x))
            pyramid.append(x)
        return stem, pyramid


def encode(image, encoder: CouplingEncoder):
    """Feature pyramid for an N×3×H×W batch (or a single 3×H×W image)."""
    single = image.ndim == 3
    if single:
        image = image[None]
    _, pyramid = encoder(image)
    return [p[0] for p in pyramid] if single else pyramid
