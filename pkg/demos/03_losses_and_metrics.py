# Losses and metrics on hand-made inputs
#
# Small worked numbers for the training objectives and the evaluation scores.

import math

import numpy as np
import torch

from hazedepth.features import build_extractor
from hazedepth.losses import charbonnier, contrastive_from_similarities, contrastive_loss, domain_consistency_loss
from hazedepth.metrics import depth_scores, psnr, ssim

# Charbonnier never drops below epsilon, and a constant 0.1 offset costs about 0.1.
x = torch.zeros(4, 4, dtype=torch.float64)
print("charbonnier(x, x)      ", charbonnier(x, x).item())
print("charbonnier(x, x + 0.1)", round(charbonnier(x, x + 0.1).item(), 8))

# The contrastive loss: with equal positive and negative similarity the
# answer is log 2; a positive at +1 and a negative at -1 costs much less.
print("tie           ", contrastive_from_similarities(torch.tensor([0.4]), torch.tensor([[0.4]])).item(), "vs", math.log(2))
print("well separated", round(contrastive_from_similarities(torch.tensor([1.0]), torch.tensor([[-1.0]])).item(), 6))

# On real images the similarities come from a frozen random-conv embedder.
ext = build_extractor()
clean = torch.rand(1, 3, 64, 64)
orange = torch.ones(2, 3, 64, 64) * torch.tensor([0.9, 0.6, 0.3])[:, None, None]
print("anchor = positive, orange negatives:", round(contrastive_loss(clean, clean, orange, ext).item(), 4))

d = torch.rand(1, 1, 8, 8)
print("domain consistency for a 0.2 shift:", round(domain_consistency_loss(d + 0.2, d).item(), 6))

# Image quality.
z = np.zeros((16, 16, 3))
print("PSNR with error 0.5:", round(psnr(z + 0.5, z), 4), "dB")
print("SSIM black vs white:", ssim(z, z + 1.0))

# Depth accuracy thresholds are 1.25, 1.5625 and 1.953125.
gt = np.full((8, 8, 1), 0.5)
for factor in (1.0, 1.3, 2.0):
    s = depth_scores(factor * gt, gt)
    print(f"pred = {factor} x gt -> rmse {s.rmse:.3f} abs_rel {s.abs_rel:.2f} deltas {s.delta1, s.delta2, s.delta3}")
