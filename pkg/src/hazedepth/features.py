"""Frozen image embedders used by the contrastive loss."""
from __future__ import annotations

from pathlib import Path

import torch
from torch import nn
import torch.nn.functional as F


class FeatureExtractor(nn.Module):
    """Frozen image -> unit-vector embedder.

    Parameters never require grad, but gradients do flow to the input image.
    """

    identifier = "base"
    dim = 0

    def __init__(self):
        super().__init__()

    @property
    def frozen(self) -> bool:
        return all(not p.requires_grad for p in self.parameters())

    def _freeze(self):
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()

    def features(self, images):
        raise NotImplementedError

    def forward(self, images):
        """(B, 3, H, W) in [0,1] -> (B, D) unit-norm embeddings."""
        single = images.ndim == 3
        if single:
            images = images[None]
        z = F.normalize(self.features(images), dim=1, eps=1e-12)
        return z[0] if single else z

    embed = forward

    def train(self, mode: bool = True):
        # always stays in eval mode
        return super().train(False)


class RandomConvExtractor(FeatureExtractor):
    """Seeded random 4-layer conv pyramid (3->16->32->64->128), tanh, global average pool.

    Inputs are centered at 0.5 and the convolutions are bias-free, so the map
    is odd around mid-gray: an all-black and an all-white image point in
    nearly opposite directions.
    """

    identifier = "random-conv"

    def __init__(self, seed: int = 1234, widths=(16, 32, 64, 128)):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        chans = (3,) + tuple(widths)
        self.convs = nn.ModuleList()
        for cin, cout in zip(chans, chans[1:]):
            conv = nn.Conv2d(cin, cout, 3, stride=2, padding=1, bias=False)
            with torch.no_grad():
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=gen) * (3.0 / (cin * 9)) ** 0.5)
            self.convs.append(conv)
        self.dim = widths[-1]
        self.seed = seed
        self._freeze()

    def features(self, images):
        x = images - 0.5
        for conv in self.convs:
            x = torch.tanh(conv(x))
        return x.mean(dim=(2, 3))


class VGG19Extractor(FeatureExtractor):
    """Pretrained VGG-19 conv features (relu5_4, globally pooled, D=512).

    Requires a local torchvision state-dict file; nothing is downloaded.
    """

    identifier = "vgg19"
    dim = 512

    def __init__(self, weights_path: str | Path | None = None):
        super().__init__()
        if weights_path is None or not Path(weights_path).exists():
            raise FileNotFoundError("vgg19 extractor needs a local weights file (weights_path)")
        from torchvision.models import vgg19

        net = vgg19()
        net.load_state_dict(torch.load(weights_path, map_location="cpu"))
        self.body = net.features[:36]
        self.register_buffer("mean", torch.tensor([0.485, 0.456, 0.406]).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor([0.229, 0.224, 0.225]).view(1, 3, 1, 1))
        self._freeze()

    def features(self, images):
        return self.body((images - self.mean) / self.std).mean(dim=(2, 3))


def build_extractor(identifier: str = "random-conv", seed: int = 1234, **kwargs) -> FeatureExtractor:
    if identifier == RandomConvExtractor.identifier:
        return RandomConvExtractor(seed=seed)
    if identifier == VGG19Extractor.identifier:
        return VGG19Extractor(**kwargs)
    raise ValueError(f"unknown extractor {identifier!r}")
