"""Serial task decoders driven by learnable queries, and the joint model.

The dehazing decoder reads the last encoder stage through its haze queries
and produces the decoupled feature ``X_h'``; the depth decoder reads ``X_h'``
(not the encoder feature) through its own depth queries. Each then climbs back
to full resolution with residual blocks and additive encoder skips.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn
import torch.nn.functional as F

from .config import DecoderConfig, EncoderConfig, RunConfig
from .encoder import CouplingEncoder, StructuralError


def sinusoidal_position(h: int, w: int, channels: int, device=None, dtype=None) -> torch.Tensor:
    """Fixed 2-D sine/cosine embedding, shape (h*w, channels)."""
    quarter = max(channels // 4, 1)
    freqs = torch.exp(-math.log(10000.0) * torch.arange(quarter, dtype=torch.float64) / quarter)
    ys, xs = torch.meshgrid(torch.arange(h, dtype=torch.float64), torch.arange(w, dtype=torch.float64), indexing="ij")
    ys, xs = ys.reshape(-1, 1) * freqs, xs.reshape(-1, 1) * freqs
    pe = torch.cat([ys.sin(), ys.cos(), xs.sin(), xs.cos()], dim=1)[:, :channels]
    if pe.shape[1] < channels:
        pe = F.pad(pe, (0, channels - pe.shape[1]))
    return pe.to(device=device, dtype=dtype or torch.get_default_dtype())


def scaled_dot_attention(q, k, v, heads: int, scale: float):
    """Multi-head attention ``softmax(q k^T * scale) v``.

    q: (B, Lq, C), k/v: (B, Lk, C). Returns output (B, Lq, C) and the
    weights (B, heads, Lq, Lk). Each row of the weights is a distribution.
    """
    B, Lq, C = q.shape
    Lk = k.shape[1]
    if C % heads:
        raise StructuralError(f"heads={heads} does not divide C={C}")
    d = C // heads
    q = q.reshape(B, Lq, heads, d).transpose(1, 2)
    k = k.reshape(B, Lk, heads, d).transpose(1, 2)
    v = v.reshape(B, Lk, heads, d).transpose(1, 2)
    weights = torch.softmax(q @ k.transpose(-1, -2) * scale, dim=-1)
    out = (weights @ v).transpose(1, 2).reshape(B, Lq, C)
    return out, weights


class QueryCrossAttention(nn.Module):
    """Two-step query read-out restoring the spatial layout.

    1. queries attend to the feature sequence -> (L, C) summary
    2. every feature token attends to the summary -> (N, C), added to the input
    Both steps scale the logits by 1/sqrt(C).
    """

    def __init__(self, channels: int, heads: int):
        super().__init__()
        if channels % heads:
            raise StructuralError(f"heads={heads} does not divide C={channels}")
        self.channels, self.heads = channels, heads
        self.scale = 1.0 / math.sqrt(channels)
        self.q1 = nn.Linear(channels, channels)
        self.k1 = nn.Linear(channels, channels)
        self.v1 = nn.Linear(channels, channels)
        self.o1 = nn.Linear(channels, channels)
        self.q2 = nn.Linear(channels, channels)
        self.k2 = nn.Linear(channels, channels)
        self.v2 = nn.Linear(channels, channels)
        self.o2 = nn.Linear(channels, channels)
        self.last_attention = None

    def forward(self, queries, feature, pos=None):
        """queries (L, C) or (B, L, C); feature (B, N, C) -> (B, N, C)."""
        if feature.shape[-1] != self.channels or queries.shape[-1] != self.channels:
            raise StructuralError(
                f"expected channel dim {self.channels}, got queries {tuple(queries.shape)}, feature {tuple(feature.shape)}"
            )
        B = feature.shape[0]
        if queries.ndim == 2:
            queries = queries.expand(B, *queries.shape)
        tokens = feature if pos is None else feature + pos
        summary, w1 = scaled_dot_attention(self.q1(queries), self.k1(tokens), self.v1(tokens), self.heads, self.scale)
        summary = queries + self.o1(summary)
        read, w2 = scaled_dot_attention(self.q2(tokens), self.k2(summary), self.v2(summary), self.heads, self.scale)
        self.last_attention = (w1, w2)
        return feature + self.o2(read)


def cross_attend(queries, feature, heads: int, module: QueryCrossAttention | None = None):
    """Functional wrapper: (L, C) queries against an (N, C) or (B, N, C) sequence."""
    single = feature.ndim == 2
    if single:
        feature = feature[None]
    if module is None:
        module = QueryCrossAttention(feature.shape[-1], heads).to(feature.dtype)
    out = module(queries, feature)
    return out[0] if single else out


class ResBlock(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)

    def forward(self, x):
        return x + self.conv2(F.gelu(self.conv1(x)))


class Upsample(nn.Module):
    """Nearest-neighbor 2x followed by a 3×3 convolution."""

    def __init__(self, in_channels, out_channels):
        super().__init__()
        self.conv = nn.Conv2d(in_channels, out_channels, 3, padding=1)

    def forward(self, x):
        return self.conv(F.interpolate(x, scale_factor=2, mode="nearest"))


class QueryBank(nn.Module):
    """Learnable L×C query matrix; L = 0 gives one fixed, non-learned zero query."""

    def __init__(self, num_queries: int, channels: int, std: float = 0.02):
        super().__init__()
        self.learnable = num_queries > 0
        if self.learnable:
            self.queries = nn.Parameter(torch.randn(num_queries, channels) * std)
        else:
            self.register_buffer("queries", torch.zeros(1, channels))

    def forward(self):
        return self.queries


class TaskDecoder(nn.Module):
    def __init__(self, enc_cfg: EncoderConfig, dec_cfg: DecoderConfig, out_channels: int):
        super().__init__()
        C = enc_cfg.channels
        self.channels = C[-1]
        self.query_bank = QueryBank(dec_cfg.num_queries, C[-1])
        self.attention = QueryCrossAttention(C[-1], dec_cfg.heads)
        # level i works at C[i] and climbs to C[i-1] (C[0] again for the stem skip)
        targets = [C[0]] + C[:-1]
        self.levels = nn.ModuleList(
            nn.Sequential(*(ResBlock(c) for _ in range(dec_cfg.blocks_per_scale))) for c in C
        )
        self.ups = nn.ModuleList(Upsample(c, t) for c, t in zip(C, targets))
        # two-layer projection so full-resolution skips get one nonlinearity
        self.head = nn.Sequential(
            nn.Conv2d(C[0], C[0], 3, padding=1), nn.GELU(), nn.Conv2d(C[0], out_channels, 3, padding=1)
        )

    def decouple(self, source):
        """Attend the query bank against a (B, C4, h, w) map; returns the same shape."""
        B, C, h, w = source.shape
        if C != self.channels:
            raise StructuralError(f"decoder expects {self.channels} channels, got {C}")
        seq = source.flatten(2).transpose(1, 2)
        pos = sinusoidal_position(h, w, C, device=source.device, dtype=source.dtype)
        out = self.attention(self.query_bank(), seq, pos)
        return out.transpose(1, 2).reshape(B, C, h, w)

    def climb(self, x, stem, pyramid):
        skips = [stem] + list(pyramid[:-1])
        for i in reversed(range(len(self.levels))):
            x = self.ups[i](self.levels[i](x)) + skips[i]
        return self.head(x)

    def forward(self, source, stem, pyramid):
        feature = self.decouple(source)
        return self.climb(feature, stem, pyramid), feature


def dehaze_head(raw):
    return torch.clamp(0.5 + 0.5 * torch.tanh(raw), 0.0, 1.0)


def depth_head(raw):
    return F.softplus(raw)


@dataclass
class DecodedOutputs:
    dehazed: torch.Tensor  # (B, 3, H, W) in [0,1]
    depth: torch.Tensor  # (B, 1, H, W) >= 0
    dehaze_feature: torch.Tensor  # (B, C4, H/16, W/16)


class JointModel(nn.Module):
    """Shared encoder plus serial dehazing -> depth decoders."""

    def __init__(self, cfg: RunConfig | None = None):
        super().__init__()
        cfg = cfg or RunConfig()
        self.encoder = CouplingEncoder(cfg.encoder)
        self.dehaze_decoder = TaskDecoder(cfg.encoder, cfg.decoder, 3)
        self.depth_decoder = TaskDecoder(cfg.encoder, cfg.decoder, 1)

    def dehaze_decode(self, stem, pyramid):
        raw, feature = self.dehaze_decoder(pyramid[-1], stem, pyramid)
        return dehaze_head(raw), feature

    def depth_decode(self, dehaze_feature, stem, pyramid):
        raw, _ = self.depth_decoder(dehaze_feature, stem, pyramid)
        return depth_head(raw)

    def forward(self, image) -> DecodedOutputs:
        stem, pyramid = self.encoder(image)
        dehazed, feature = self.dehaze_decode(stem, pyramid)
        depth = self.depth_decode(feature, stem, pyramid)
        return DecodedOutputs(dehazed=dehazed, depth=depth, dehaze_feature=feature)
