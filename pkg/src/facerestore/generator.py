"""Progressive generator with semantic style modulation.

Generation starts from a learned constant feature map and climbs a
dyadic resolution ladder. At every level the feature map is first
instance-normalized and then rescaled/shifted by maps predicted from the
degraded input and its parsing map at that level's resolution, so the
semantic layout steers texture synthesis at every scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .parsing import NUM_CLASSES, label_one_hot, validate_labels
from .spectral import SNConv2d

STYLE_EPS = 1e-5


@dataclass(frozen=True)
class GenConfig:
    """Generator hyperparameters; defaults build the 512x512 model."""

    base_resolution: int = 16
    num_blocks: int = 6
    channel_schedule: tuple[int, ...] = (512, 512, 256, 128, 64, 32)
    const_channels: int = 512
    style_hidden: int = 64
    num_classes: int = NUM_CLASSES

    @property
    def in_resolution(self) -> int:
        return self.base_resolution * 2 ** (self.num_blocks - 1)

    @property
    def level_resolutions(self) -> tuple[int, ...]:
        return tuple(self.base_resolution * 2**i for i in range(self.num_blocks))

    def validate(self) -> None:
        if self.num_blocks < 1 or self.base_resolution < 1:
            raise ValueError("need at least one block and a positive base resolution")
        if len(self.channel_schedule) != self.num_blocks:
            raise ValueError(
                f"channel_schedule has {len(self.channel_schedule)} entries for {self.num_blocks} blocks"
            )
        if any(c < 1 for c in self.channel_schedule):
            raise ValueError("channel counts must be positive")
        if any(a < b for a, b in zip(self.channel_schedule, self.channel_schedule[1:])):
            raise ValueError("channel_schedule must be non-increasing")


def build_input_pyramid(
    lq: torch.Tensor, labels: torch.Tensor, config: GenConfig
) -> list[tuple[torch.Tensor, torch.Tensor]]:
    """Per-level (degraded image, soft parsing) pairs, finest level last.

    The one-hot parsing planes are resized with the same bicubic kernel
    as the image, yielding soft region masks whose channel sum stays 1.
    """
    config.validate()
    res = config.in_resolution
    if lq.dim() != 4 or lq.shape[1] != 3 or lq.shape[2] != res or lq.shape[3] != res:
        raise ValueError(f"expected a (B, 3, {res}, {res}) input, got {tuple(lq.shape)}")
    if labels.shape[0] != lq.shape[0] or labels.shape[-2:] != lq.shape[-2:]:
        raise ValueError(f"labels {tuple(labels.shape)} do not match input {tuple(lq.shape)}")
    validate_labels(labels, config.num_classes)
    parse = label_one_hot(labels, config.num_classes, dtype=lq.dtype)
    levels = []
    for size in config.level_resolutions:
        if size == res:
            levels.append((lq, parse))
        else:
            levels.append(
                (
                    F.interpolate(lq, size=(size, size), mode="bicubic", align_corners=False),
                    F.interpolate(parse, size=(size, size), mode="bicubic", align_corners=False),
                )
            )
    return levels


class StyleNet(nn.Module):
    """Predicts per-pixel scale and shift maps from an (image, parsing) pair.

    Head biases start at 1 (scale) and 0 (shift) and every conv bias in
    the trunk starts at zero, so an all-zero input pair yields exactly
    identity modulation.
    """

    def __init__(self, out_channels: int, hidden: int = 64, num_classes: int = NUM_CLASSES):
        super().__init__()
        in_channels = 3 + num_classes
        self.conv1 = SNConv2d(in_channels, hidden, 3, padding=1)
        self.conv2 = SNConv2d(hidden, hidden, 3, padding=1)
        self.head_scale = SNConv2d(hidden, out_channels, 3, padding=1)
        self.head_shift = SNConv2d(hidden, out_channels, 3, padding=1)
        nn.init.zeros_(self.conv1.bias)
        nn.init.zeros_(self.conv2.bias)
        nn.init.ones_(self.head_scale.bias)
        nn.init.zeros_(self.head_shift.bias)

    def forward(self, lq: torch.Tensor, parse: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        h = torch.cat([lq, parse], dim=1)
        h = F.leaky_relu(self.conv1(h), 0.2)
        h = F.leaky_relu(self.conv2(h), 0.2)
        return self.head_scale(h), self.head_shift(h)


def style_transform(feat: torch.Tensor, scale: torch.Tensor, shift: torch.Tensor, eps: float = STYLE_EPS) -> torch.Tensor:
    """Instance-normalize then modulate: ``scale * (x - mu) / (sigma + eps) + shift``.

    Statistics are per sample and per channel over the spatial plane
    (population standard deviation); constant channels normalize to zero
    rather than dividing by zero.
    """
    if feat.dim() != 4:
        raise ValueError(f"expected a (B, C, H, W) feature map, got {tuple(feat.shape)}")
    if scale.shape != feat.shape or shift.shape != feat.shape:
        raise ValueError("scale/shift maps must match the feature map shape")
    mu = feat.mean(dim=(2, 3), keepdim=True)
    sigma = feat.var(dim=(2, 3), keepdim=True, unbiased=False).sqrt()
    return scale * (feat - mu) / (sigma + eps) + shift


class ResidualBlock(nn.Module):
    """Pre-activation residual block, optionally doubling resolution first."""

    def __init__(self, in_ch: int, out_ch: int, upsample: bool):
        super().__init__()
        self.upsample = upsample
        self.conv1 = SNConv2d(in_ch, out_ch, 3, padding=1)
        self.conv2 = SNConv2d(out_ch, out_ch, 3, padding=1)
        self.skip = SNConv2d(in_ch, out_ch, 1, bias=False) if in_ch != out_ch else None

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if self.upsample:
            x = F.interpolate(x, scale_factor=2, mode="nearest")
        h = self.conv1(F.leaky_relu(x, 0.2))
        h = self.conv2(F.leaky_relu(h, 0.2))
        return h + (x if self.skip is None else self.skip(x))


class ProgressiveGenerator(nn.Module):
    """Constant-seeded progressive decoder with per-level style modulation."""

    def __init__(self, config: GenConfig | None = None):
        super().__init__()
        config = config or GenConfig()
        config.validate()
        self.config = config
        self.const = nn.Parameter(torch.randn(config.const_channels, config.base_resolution, config.base_resolution))
        blocks, styles = [], []
        ch = config.const_channels
        for i, out_ch in enumerate(config.channel_schedule):
            blocks.append(ResidualBlock(ch, out_ch, upsample=i > 0))
            styles.append(StyleNet(out_ch, hidden=config.style_hidden, num_classes=config.num_classes))
            ch = out_ch
        self.blocks = nn.ModuleList(blocks)
        self.styles = nn.ModuleList(styles)
        self.to_rgb = SNConv2d(ch, 3, 3, padding=1)

    def _resolve_zero_levels(self, zero_levels) -> set[int]:
        if zero_levels in (None, ()):
            return set()
        if zero_levels == "all":
            return set(range(1, self.config.num_blocks + 1))
        levels = {int(i) for i in zero_levels}
        bad = [i for i in levels if not 1 <= i <= self.config.num_blocks]
        if bad:
            raise ValueError(f"zero levels {bad} outside [1, {self.config.num_blocks}]")
        return levels

    def forward(
        self,
        lq: torch.Tensor,
        labels: torch.Tensor,
        zero_levels=(),
        return_features: bool = False,
    ):
        """Restore ``lq`` guided by ``labels``.

        ``zero_levels`` blanks the (image, parsing) pair at the given
        1-based levels (or "all") before style prediction, for input
        ablations. With ``return_features`` the per-level feature maps
        are returned alongside the image.
        """
        zero = self._resolve_zero_levels(zero_levels)
        pyramid = build_input_pyramid(lq, labels, self.config)
        x = self.const.unsqueeze(0).expand(lq.shape[0], -1, -1, -1)
        feats = []
        for i, (block, style) in enumerate(zip(self.blocks, self.styles)):
            lq_i, parse_i = pyramid[i]
            if (i + 1) in zero:
                lq_i, parse_i = torch.zeros_like(lq_i), torch.zeros_like(parse_i)
            x = block(x)
            scale, shift = style(lq_i, parse_i)
            x = style_transform(x, scale, shift)
            feats.append(x)
        img = torch.tanh(self.to_rgb(x))
        return (img, feats) if return_features else img
