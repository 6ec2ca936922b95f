"""Padded inference and per-image evaluation."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .decoders import JointModel
from .metrics import dehaze_scores, depth_scores

METRIC_COLUMNS = ["id", "psnr", "ssim", "rmse", "abs_rel", "d1", "d2", "d3"]


def pad_to_multiple(x: torch.Tensor, multiple: int = 16):
    """Reflect-pad an N×C×H×W batch on the bottom/right; returns (padded, (H, W))."""
    H, W = x.shape[-2:]
    ph, pw = (-H) % multiple, (-W) % multiple
    if ph or pw:
        mode = "reflect" if ph < H and pw < W else "replicate"
        x = F.pad(x, (0, pw, 0, ph), mode=mode)
    return x, (H, W)


def to_tensor(img: np.ndarray, dtype=torch.float32) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(img.transpose(2, 0, 1))).to(dtype)[None]


def to_numpy(t: torch.Tensor) -> np.ndarray:
    return t[0].detach().cpu().double().numpy().transpose(1, 2, 0)


@torch.no_grad()
def predict(model: JointModel, image: np.ndarray, multiple: int = 16):
    """Dehazed H×W×3 and depth H×W×1 for one H×W×3 image of any size."""
    was_training = model.training
    model.eval()
    dtype = next(model.parameters()).dtype
    x, (H, W) = pad_to_multiple(to_tensor(image, dtype), multiple)
    out = model(x)
    model.train(was_training)
    return to_numpy(out.dehazed[..., :H, :W]), to_numpy(out.depth[..., :H, :W])


def score_row(sid, dehazed, clean, depth_pred, depth_gt) -> dict:
    dh = dehaze_scores(dehazed, clean)
    dp = depth_scores(depth_pred, depth_gt)
    return {"id": sid, "psnr": dh.psnr, "ssim": dh.ssim, "rmse": dp.rmse, "abs_rel": dp.abs_rel,
            "d1": dp.delta1, "d2": dp.delta2, "d3": dp.delta3}


def aggregate(rows: list[dict]) -> dict:
    agg = {"id": "mean"}
    for col in METRIC_COLUMNS[1:]:
        agg[col] = float(np.mean([r[col] for r in rows])) if rows else float("nan")
    return agg


def evaluate(model: JointModel, samples, limit: int | None = None) -> list[dict]:
    """Per-image metric rows followed by the aggregate (mean) row."""
    rows = []
    for s in samples[:limit] if limit is not None else samples:
        dehazed, depth = predict(model, s.hazy)
        rows.append(score_row(s.id, dehazed, s.clean, depth, s.depth))
    return rows + [aggregate(rows)]


def write_metrics_csv(path, rows: list[dict]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return path
