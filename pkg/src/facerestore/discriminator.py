"""Multi-scale patch discriminators with spectral normalization."""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from .spectral import SNConv2d

SCALES = (1.0, 0.5, 0.25)
NUM_FEATURE_LAYERS = 4


class PatchDiscriminator(nn.Module):
    """Stack of stride-2 convolutions scoring overlapping patches.

    ``forward`` returns the patch score map and the four intermediate
    activations (shallow to deep) used for feature matching.
    """

    def __init__(self, in_channels: int = 3, base_channels: int = 64, max_channels: int = 512):
        super().__init__()
        convs, ch = [], in_channels
        for i in range(NUM_FEATURE_LAYERS):
            nxt = min(base_channels * 2**i, max_channels)
            convs.append(SNConv2d(ch, nxt, 4, stride=2, padding=2))
            ch = nxt
        self.convs = nn.ModuleList(convs)
        self.score = SNConv2d(ch, 1, 4, stride=1, padding=2)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, list[torch.Tensor]]:
        feats = []
        for conv in self.convs:
            x = F.leaky_relu(conv(x), 0.2)
            feats.append(x)
        return self.score(x), feats


class MultiScaleDiscriminator(nn.Module):
    """Independent patch discriminators at full, half, and quarter scale.

    No weights are shared between scales; inputs are resized internally
    with bilinear interpolation.
    """

    def __init__(self, in_channels: int = 3, base_channels: int = 64):
        super().__init__()
        self.nets = nn.ModuleList(PatchDiscriminator(in_channels, base_channels) for _ in SCALES)

    def forward_scale(self, img: torch.Tensor, scale: float) -> tuple[torch.Tensor, list[torch.Tensor]]:
        if scale not in SCALES:
            raise ValueError(f"scale must be one of {SCALES}, got {scale}")
        if scale != 1.0:
            img = F.interpolate(img, scale_factor=scale, mode="bilinear", align_corners=False)
        return self.nets[SCALES.index(scale)](img)

    def forward(self, img: torch.Tensor) -> list[tuple[torch.Tensor, list[torch.Tensor]]]:
        return [self.forward_scale(img, s) for s in SCALES]
