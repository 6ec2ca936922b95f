"""Procedural clean-image + depth scenes for desk-scale corpora.

Each scene is a sky band above a ground plane receding to the horizon, with a
few flat-colored boxes standing nearer to the camera.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .config import PSEUDO_REAL_AIRLIGHT, AirlightConfig
from .imageio import to_uint8, write_rgb
from .synthesis import sample_scatter_params, sample_seed, synthesize


def _smooth_noise(rng, size, cells=4):
    coarse = rng.uniform(-1, 1, (cells + 1, cells + 1))
    xs = np.linspace(0, cells, size)
    i0 = np.minimum(xs.astype(int), cells - 1)
    f = xs - i0
    rows = coarse[i0] * (1 - f)[:, None] + coarse[i0 + 1] * f[:, None]
    return rows[:, i0] * (1 - f)[None, :] + rows[:, i0 + 1] * f[None, :]


def make_scene(rng: np.random.Generator, size: int = 64, max_depth: float = 10.0):
    """Return ``(clean H×W×3 in [0,1], depth H×W×1 in (0, max_depth])``."""
    rows = np.arange(size, dtype=np.float64)[:, None] * np.ones((1, size))
    horizon = rng.uniform(0.25, 0.5) * size
    below = np.clip((rows - horizon) / (size - horizon), 1e-3, 1.0)
    depth = np.where(rows < horizon, max_depth, np.minimum(max_depth, 1.0 / below))

    sky_top = rng.uniform(0.5, 1.0, 3)
    sky_bottom = rng.uniform(0.6, 1.0, 3)
    a = (rows / max(horizon, 1.0)).clip(0, 1)[..., None]
    sky = sky_top * (1 - a) + sky_bottom * a
    ground_color = rng.uniform(0.1, 0.6, 3)
    texture = 0.08 * _smooth_noise(rng, size, cells=6)[..., None]
    ground = np.clip(ground_color + texture, 0, 1)
    clean = np.where((rows < horizon)[..., None], sky, ground)

    for _ in range(rng.integers(1, 4)):
        w, h = rng.integers(size // 8, size // 3, 2)
        x0 = rng.integers(0, size - w)
        base = rng.uniform(horizon + 2, size)
        y1 = int(min(size, base))
        y0 = max(0, y1 - h)
        d_obj = min(max_depth, 1.0 / max((base - horizon) / (size - horizon), 1e-3))
        region = np.zeros((size, size), bool)
        region[y0:y1, x0:x0 + w] = True
        depth = np.where(region & (depth > d_obj), d_obj, depth)
        color = rng.uniform(0.05, 0.95, 3)
        clean[region & (depth == d_obj)] = color
    return np.clip(clean, 0, 1), depth[..., None]


def write_corpus(out, count: int, size: int = 64, seed: int = 0) -> Path:
    """Write ``count`` procedural scenes in the ``clean/`` + ``depth/*.npy`` corpus layout."""
    out = Path(out)
    (out / "clean").mkdir(parents=True, exist_ok=True)
    (out / "depth").mkdir(parents=True, exist_ok=True)
    for i in range(count):
        clean, depth = make_scene(np.random.default_rng(sample_seed(seed, i)), size)
        write_rgb(out / "clean" / f"scene{i:04d}.png", clean)
        np.save(out / "depth" / f"scene{i:04d}.npy", depth.astype(np.float32))
    return out


def write_pseudo_real(out, count: int, size: int = 64, seed: int = 10_000,
                      config: AirlightConfig | None = None) -> Path:
    """Flat directory of unlabeled hazy images from a disjoint airlight band.

    Stand-in for a real-world hazy corpus. Depth is normalized like the
    labeled datasets so beta ranges mean the same thing.
    """
    config = config or AirlightConfig(**PSEUDO_REAL_AIRLIGHT)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "PSEUDO_REAL").write_text("synthetic stand-in for real hazy images\n")
    for i in range(count):
        s = sample_seed(seed, i)
        clean, depth = make_scene(np.random.default_rng(s), size)
        params = sample_scatter_params(s, config)
        hazy = synthesize(clean, depth / depth.max(), params).hazy
        write_rgb(out / f"real{i:05d}.png", to_uint8(hazy))
    return out
