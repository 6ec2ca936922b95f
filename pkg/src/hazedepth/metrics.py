"""Dehazing (PSNR, SSIM) and depth (RMSE, Abs Rel, delta accuracies) metrics.

All functions take numpy-compatible HWC arrays and compute in float64.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.ndimage import correlate1d

PSNR_CAP = 100.0


class MetricInputError(ValueError):
    pass


@dataclass
class DehazeScores:
    psnr: float
    ssim: float


@dataclass
class DepthScores:
    rmse: float
    abs_rel: float
    delta1: float
    delta2: float
    delta3: float

    def as_dict(self):
        return asdict(self)


def _pair(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise MetricInputError(f"shape mismatch {pred.shape} vs {gt.shape}")
    return pred, gt


def psnr(pred, gt, peak: float = 1.0, cap: float = PSNR_CAP) -> float:
    pred, gt = _pair(pred, gt)
    mse = np.mean((pred - gt) ** 2)
    if mse == 0:
        return cap
    return float(min(cap, 10.0 * np.log10(peak**2 / mse)))


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2
    g = np.exp(-(x**2) / (2 * sigma**2))
    return g / g.sum()


def _filter_valid(img, window):
    half = len(window) // 2
    out = correlate1d(correlate1d(img, window, axis=0, mode="constant"), window, axis=1, mode="constant")
    return out[half:-half or None, half:-half or None]


def ssim_map(pred, gt, peak: float = 1.0, size: int = 11, sigma: float = 1.5):
    """Local SSIM over the valid region of a single-channel pair."""
    x, y = _pair(pred, gt)
    if x.ndim != 2:
        raise MetricInputError("ssim_map expects a 2-D array")
    if min(x.shape) < size:
        raise MetricInputError(f"image {x.shape} smaller than the {size}×{size} window")
    w = gaussian_window(size, sigma)
    c1, c2 = (0.01 * peak) ** 2, (0.03 * peak) ** 2
    mu_x, mu_y = _filter_valid(x, w), _filter_valid(y, w)
    sxx = _filter_valid(x * x, w) - mu_x * mu_x
    syy = _filter_valid(y * y, w) - mu_y * mu_y
    sxy = _filter_valid(x * y, w) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * sxy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (sxx + syy + c2)
    return num / den


def ssim(pred, gt, peak: float = 1.0) -> float:
    """Mean single-scale SSIM (11×11 Gaussian, sigma 1.5), averaged over channels."""
    pred, gt = _pair(pred, gt)
    if pred.ndim == 2:
        pred, gt = pred[..., None], gt[..., None]
    vals = [ssim_map(pred[..., c], gt[..., c], peak).mean() for c in range(pred.shape[-1])]
    return float(np.mean(vals))


def dehaze_scores(pred, gt, peak: float = 1.0) -> DehazeScores:
    return DehazeScores(psnr=psnr(pred, gt, peak), ssim=ssim(pred, gt, peak))


def depth_scores(pred, gt, valid_min: float = 1e-6) -> DepthScores:
    """Depth errors over pixels with ``gt >= valid_min``; delta_i uses strict ``<``."""
    pred, gt = _pair(pred, gt)
    mask = gt >= valid_min
    if not mask.any():
        raise MetricInputError("no valid ground-truth depth pixels")
    p, g = pred[mask], gt[mask]
    ratio = np.maximum(p / g, g / p) if np.all(p > 0) else _safe_ratio(p, g)
    return DepthScores(
        rmse=float(np.sqrt(np.mean((p - g) ** 2))),
        abs_rel=float(np.mean(np.abs(p - g) / g)),
        delta1=float(np.mean(ratio < 1.25)),
        delta2=float(np.mean(ratio < 1.25**2)),
        delta3=float(np.mean(ratio < 1.25**3)),
    )


def _safe_ratio(p, g):
    # zero predictions count as infinitely wrong
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.maximum(p / g, np.where(p > 0, g / np.where(p > 0, p, 1.0), np.inf))
    return r
