"""Training objectives: Charbonnier reconstruction, contrastive loss against
real hazy negatives, depth domain consistency, and their weighted sum."""
from __future__ import annotations

from dataclasses import dataclass, fields

import torch

from .config import LossWeights
from .features import FeatureExtractor

EPSILON = 1e-3


class LossShapeError(ValueError):
    pass


def _same_shape(x, y, what):
    if x.shape != y.shape:
        raise LossShapeError(f"{what}: shape mismatch {tuple(x.shape)} vs {tuple(y.shape)}")


def charbonnier(x, y, epsilon: float = EPSILON):
    """mean(sqrt((x - y)^2 + eps^2)).

    Written as ``eps * mean(sqrt((d/eps)^2 + 1))`` so that ``x == y`` returns
    exactly ``eps``.
    """
    _same_shape(x, y, "charbonnier")
    d = (x - y) / epsilon
    return epsilon * torch.sqrt(d * d + 1.0).mean()


def contrastive_loss(anchor, positive, negatives, extractor: FeatureExtractor, temperature: float = 1.0):
    """InfoNCE with the restored image as anchor, ground truth as positive and
    a shared pool of real hazy images as negatives.

    anchor/positive: (B, 3, H, W); negatives: (N, 3, H, W) or None. Only the
    anchor receives gradients. Mean over the batch.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    _same_shape(anchor, positive, "contrastive anchor/positive")
    if negatives is None or len(negatives) == 0:
        return anchor.new_zeros(())
    if negatives.shape[1:] != anchor.shape[1:]:
        raise LossShapeError(f"negatives {tuple(negatives.shape)} vs anchor {tuple(anchor.shape)}")
    a = extractor(anchor)
    with torch.no_grad():
        p = extractor(positive.detach())
        n = extractor(negatives.detach())
    return contrastive_from_similarities((a * p).sum(1), a @ n.T, temperature)


def contrastive_from_similarities(s_pos, s_neg, temperature: float = 1.0):
    """Loss from precomputed similarities: s_pos (B,), s_neg (B, N)."""
    logits = torch.cat([s_pos[:, None], s_neg], dim=1) / temperature
    return (torch.logsumexp(logits, dim=1) - logits[:, 0]).mean()


def domain_consistency_loss(depth_from_clean, depth_gt, norm: str = "l1"):
    _same_shape(depth_from_clean, depth_gt, "domain consistency")
    diff = depth_from_clean - depth_gt
    if norm == "l1":
        return diff.abs().mean()
    if norm == "l2":
        return (diff * diff).mean()
    raise ValueError(f"unknown norm {norm!r}")


@dataclass
class LossReport:
    depth_char: torch.Tensor
    dehaze_char: torch.Tensor
    contrastive: torch.Tensor
    domain_consistency: torch.Tensor
    total: torch.Tensor

    COLUMNS = ("depth_char", "dehaze_char", "contrastive", "domain_consistency", "total")

    def as_floats(self) -> dict[str, float]:
        return {f.name: float(getattr(self, f.name).detach()) for f in fields(self)}

    def nonfinite_terms(self) -> list[str]:
        return [k for k, v in self.as_floats().items() if not torch.isfinite(torch.tensor(v))]


def total_loss(outputs_hazy, depth_from_clean, clean_gt, depth_gt, negatives,
               weights: LossWeights, extractor: FeatureExtractor,
               temperature: float = 1.0, epsilon: float = EPSILON, norm: str = "l1") -> LossReport:
    """Weighted sum of the four objectives.

    outputs_hazy is the model's output on the hazy input; depth_from_clean is
    the depth predicted from the clean image of the same scene.
    """
    depth_char = charbonnier(outputs_hazy.depth, depth_gt, epsilon)
    dehaze_char = charbonnier(outputs_hazy.dehazed, clean_gt, epsilon)
    if weights.lambda3:
        cr = contrastive_loss(outputs_hazy.dehazed, clean_gt, negatives, extractor, temperature)
    else:
        # still reported, but kept out of the graph
        with torch.no_grad():
            cr = contrastive_loss(outputs_hazy.dehazed, clean_gt, negatives, extractor, temperature)
    if depth_from_clean is not None:
        dc = domain_consistency_loss(depth_from_clean, depth_gt, norm)
    else:
        dc = depth_char.new_zeros(())
    total = (weights.lambda1 * depth_char + weights.lambda2 * dehaze_char
             + weights.lambda3 * cr + weights.lambda4 * dc)
    return LossReport(depth_char, dehaze_char, cr, dc, total)
