"""Face parsing network and label-map utilities.

The parser maps a degraded face to a 19-class segmentation (background,
skin, brows, eyes, glasses, ears, earrings, nose, mouth, lips, neck,
necklace, cloth, hair, hat) plus a coarse restored image that acts as a
multi-task regularizer.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

NUM_CLASSES = 19


@dataclass(frozen=True)
class FpnConfig:
    """Parser hyperparameters; the defaults are the full-resolution model."""

    in_resolution: int = 512
    num_classes: int = NUM_CLASSES
    base_channels: int = 64
    num_down: int = 4
    num_resblocks: int = 10
    num_up: int = 4
    max_channels: int = 512

    def validate(self) -> None:
        if self.num_down != self.num_up:
            raise ValueError(f"num_down ({self.num_down}) must equal num_up ({self.num_up})")
        if self.num_classes != NUM_CLASSES:
            raise ValueError(f"num_classes must be {NUM_CLASSES}, got {self.num_classes}")
        if self.in_resolution % (2**self.num_down) != 0:
            raise ValueError(f"in_resolution {self.in_resolution} not divisible by 2^{self.num_down}")
        if self.base_channels < 1 or self.num_resblocks < 0:
            raise ValueError("bad channel/block counts")


def validate_labels(labels: torch.Tensor, num_classes: int = NUM_CLASSES) -> None:
    if labels.dtype not in (torch.int64, torch.int32, torch.uint8):
        raise ValueError(f"label maps must be integer tensors, got {labels.dtype}")
    if labels.numel() and (int(labels.min()) < 0 or int(labels.max()) >= num_classes):
        raise ValueError(f"label values outside [0, {num_classes - 1}]")


def label_one_hot(labels: torch.Tensor, num_classes: int = NUM_CLASSES, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """(B, H, W) integer labels -> (B, num_classes, H, W) one-hot planes."""
    validate_labels(labels, num_classes)
    planes = F.one_hot(labels.long(), num_classes)
    return planes.permute(0, 3, 1, 2).to(dtype)


class ConvNormAct(nn.Module):
    """Conv followed by BatchNorm and LeakyReLU(0.2)."""

    def __init__(self, in_ch: int, out_ch: int, kernel: int = 3, stride: int = 1):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, kernel, stride=stride, padding=kernel // 2)
        self.norm = nn.BatchNorm2d(out_ch)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return F.leaky_relu(self.norm(self.conv(x)), 0.2)


class ResBlockBN(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.body = nn.Sequential(ConvNormAct(channels, channels), ConvNormAct(channels, channels))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.body(x)


class ParsingNet(nn.Module):
    """Encoder, residual bottleneck, decoder, and two output heads.

    ``forward`` returns ``(logits, restored)`` where logits are raw
    per-class scores at input resolution and ``restored`` is a tanh
    image in [-1, 1].
    """

    def __init__(self, config: FpnConfig | None = None):
        super().__init__()
        config = config or FpnConfig()
        config.validate()
        self.config = config

        ch = config.base_channels
        self.stem = ConvNormAct(3, ch, kernel=7)
        downs, channels = [], [ch]
        for _ in range(config.num_down):
            nxt = min(ch * 2, config.max_channels)
            downs.append(ConvNormAct(ch, nxt, stride=2))
            ch = nxt
            channels.append(ch)
        self.downs = nn.ModuleList(downs)
        self.bottleneck = nn.Sequential(*[ResBlockBN(ch) for _ in range(config.num_resblocks)])
        ups = []
        for skip_ch in reversed(channels[:-1]):
            ups.append(ConvNormAct(ch, skip_ch))
            ch = skip_ch
        self.ups = nn.ModuleList(ups)
        self.head_logits = nn.Conv2d(ch, config.num_classes, 3, padding=1)
        self.head_image = nn.Conv2d(ch, 3, 3, padding=1)

    def forward(self, lq: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        res = self.config.in_resolution
        if lq.dim() != 4 or lq.shape[1] != 3:
            raise ValueError(f"expected a (B, 3, H, W) input, got {tuple(lq.shape)}")
        if lq.shape[2] != res or lq.shape[3] != res:
            raise ValueError(f"expected {res}x{res} input, got {lq.shape[2]}x{lq.shape[3]}")
        x = self.stem(lq)
        for down in self.downs:
            x = down(x)
        x = self.bottleneck(x)
        for up in self.ups:
            x = up(F.interpolate(x, scale_factor=2, mode="nearest"))
        return self.head_logits(x), torch.tanh(self.head_image(x))


def fpn_loss(logits: torch.Tensor, restored: torch.Tensor, gt_labels: torch.Tensor, gt_hq: torch.Tensor) -> torch.Tensor:
    """Mean per-pixel cross-entropy plus mean-square image error, equally weighted."""
    validate_labels(gt_labels, logits.shape[1])
    if logits.shape[0] != gt_labels.shape[0] or logits.shape[-2:] != gt_labels.shape[-2:]:
        raise ValueError(f"logits {tuple(logits.shape)} do not match labels {tuple(gt_labels.shape)}")
    if restored.shape != gt_hq.shape:
        raise ValueError(f"restored {tuple(restored.shape)} does not match target {tuple(gt_hq.shape)}")
    return F.cross_entropy(logits, gt_labels.long()) + F.mse_loss(restored, gt_hq)


def argmax_labels(logits: torch.Tensor) -> torch.Tensor:
    """Per-pixel argmax over the class dimension; ties pick the lowest index."""
    if logits.dim() != 4:
        raise ValueError(f"expected (B, C, H, W) logits, got {tuple(logits.shape)}")
    return logits.argmax(dim=1)
