"""Training losses: semantic style statistics, reconstruction, hinge GAN.

Every squared-difference term below is a mean over its elements, so loss
magnitudes are comparable across feature sizes and the configured
weights keep their intended balance.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .parsing import NUM_CLASSES, label_one_hot

GRAM_EPS = 1e-8


@dataclass(frozen=True)
class LossWeights:
    """Weights for the generator objective: style, reconstruction, adversarial."""

    style: float = 100.0
    rec: float = 10.0
    adv: float = 1.0

    def validate(self) -> None:
        if min(self.style, self.rec, self.adv) < 0:
            raise ValueError("loss weights must be non-negative")


def masked_gram(phi: torch.Tensor, mask: torch.Tensor, eps: float = GRAM_EPS) -> torch.Tensor:
    """Gram matrix of a feature map restricted to a spatial mask.

    ``phi`` is (C, H, W), ``mask`` is (H, W) with soft weights in [0, 1].
    Each channel is multiplied by the mask before the inner product and
    the result is divided by the mask mass plus a small epsilon, so an
    all-zero mask yields an all-zero matrix instead of NaN.
    """
    if phi.dim() != 3 or mask.dim() != 2 or phi.shape[-2:] != mask.shape:
        raise ValueError(f"phi {tuple(phi.shape)} and mask {tuple(mask.shape)} do not align")
    c = phi.shape[0]
    flat = (phi * mask.unsqueeze(0)).reshape(c, -1)
    return (flat @ flat.t()) / (mask.sum() + eps)


def _batched_masked_gram(phi: torch.Tensor, mask: torch.Tensor, eps: float = GRAM_EPS) -> torch.Tensor:
    """(B, C, H, W) features and (B, 1, H, W) masks -> (B, C, C) grams."""
    b, c = phi.shape[:2]
    flat = (phi * mask).reshape(b, c, -1)
    denom = mask.reshape(b, -1).sum(dim=1).clamp_min(0) + eps
    return torch.bmm(flat, flat.transpose(1, 2)) / denom.view(b, 1, 1)


def semantic_style_loss(
    pred: torch.Tensor,
    gt: torch.Tensor,
    labels: torch.Tensor,
    extractor: nn.Module,
    num_classes: int = NUM_CLASSES,
) -> torch.Tensor:
    """Region-wise Gram-matrix distance between two images.

    For each extractor layer and each semantic class, the Gram matrix of
    the features under that class's mask is compared between ``pred``
    and ``gt`` with a mean-square penalty. Masks are downsampled to each
    feature resolution by area averaging. Per-sample terms are summed
    over classes and layers, then averaged over the batch.
    """
    if pred.shape != gt.shape:
        raise ValueError(f"pred {tuple(pred.shape)} and gt {tuple(gt.shape)} differ")
    if labels.shape[0] != pred.shape[0] or labels.shape[-2:] != pred.shape[-2:]:
        raise ValueError(f"labels {tuple(labels.shape)} do not match images {tuple(pred.shape)}")
    feats_pred = extractor(pred)
    feats_gt = extractor(gt)
    masks = label_one_hot(labels, num_classes, dtype=pred.dtype)
    total = pred.new_zeros(pred.shape[0])
    for fp, fg in zip(feats_pred, feats_gt):
        if fp.shape[-2:] == masks.shape[-2:]:
            m = masks
        else:
            m = F.interpolate(masks, size=fp.shape[-2:], mode="area")
        for j in range(num_classes):
            mj = m[:, j : j + 1]
            diff = _batched_masked_gram(fp, mj) - _batched_masked_gram(fg, mj)
            total = total + diff.pow(2).mean(dim=(1, 2))
    return total.mean()


def reconstruction_loss(
    pred: torch.Tensor,
    gt: torch.Tensor,
    feats_pred: list[list[torch.Tensor]],
    feats_gt: list[list[torch.Tensor]],
) -> torch.Tensor:
    """Pixel mean-square error plus discriminator feature matching.

    ``feats_pred``/``feats_gt`` hold, per discriminator scale, the four
    intermediate activations for the predicted and target images.
    """
    if pred.shape != gt.shape:
        raise ValueError(f"pred {tuple(pred.shape)} and gt {tuple(gt.shape)} differ")
    if len(feats_pred) != len(feats_gt):
        raise ValueError(f"feature scale counts differ: {len(feats_pred)} vs {len(feats_gt)}")
    loss = F.mse_loss(pred, gt)
    for fp_scale, fg_scale in zip(feats_pred, feats_gt):
        if len(fp_scale) != 4 or len(fg_scale) != 4:
            raise ValueError(f"expected 4 feature layers per scale, got {len(fp_scale)} and {len(fg_scale)}")
        for fp, fg in zip(fp_scale, fg_scale):
            loss = loss + F.mse_loss(fp, fg)
    return loss


def gan_g_loss(fake_scores: list[torch.Tensor]) -> torch.Tensor:
    """Hinge generator loss: negated mean fake score, summed over scales."""
    if not fake_scores:
        raise ValueError("no discriminator scores given")
    loss = -fake_scores[0].mean()
    for s in fake_scores[1:]:
        loss = loss - s.mean()
    return loss


def gan_d_loss(real_scores: list[torch.Tensor], fake_scores: list[torch.Tensor]) -> torch.Tensor:
    """Hinge discriminator loss, summed over scales."""
    if len(real_scores) != len(fake_scores) or not real_scores:
        raise ValueError("real/fake score lists must be non-empty and the same length")
    loss = None
    for r, f in zip(real_scores, fake_scores):
        term = F.relu(1.0 - r).mean() + F.relu(1.0 + f).mean()
        loss = term if loss is None else loss + term
    return loss


def total_g_loss(l_ss, l_rec, l_g, weights: LossWeights) -> torch.Tensor:
    """Weighted sum of the three generator loss components."""
    weights.validate()
    return weights.style * l_ss + weights.rec * l_rec + weights.adv * l_g


class RandomFeatureExtractor(nn.Module):
    """Frozen random-weight conv pyramid standing in for a pretrained one.

    Useful wherever the style loss needs multi-scale features but no
    pretrained weights are available (tests, CPU-only training). Weights
    are drawn from a private generator so instances are reproducible.
    """

    def __init__(
        self,
        channels: tuple[int, ...] = (16, 32, 64),
        strides: tuple[int, ...] = (2, 2, 2),
        in_channels: int = 3,
        seed: int = 0,
    ):
        super().__init__()
        if len(channels) != len(strides):
            raise ValueError("channels and strides must have the same length")
        gen = torch.Generator().manual_seed(seed)
        convs, ch = [], in_channels
        for out_ch, stride in zip(channels, strides):
            conv = nn.Conv2d(ch, out_ch, 3, stride=stride, padding=1)
            with torch.no_grad():
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=gen) * (0.4 / (ch * 9) ** 0.5))
                conv.bias.zero_()
            convs.append(conv)
            ch = out_ch
        self.convs = nn.ModuleList(convs)
        self.requires_grad_(False)

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        feats = []
        for conv in self.convs:
            weight = conv.weight.to(x.dtype)
            bias = conv.bias.to(x.dtype)
            x = F.leaky_relu(F.conv2d(x, weight, bias, stride=conv.stride, padding=conv.padding), 0.2)
            feats.append(x)
        return feats


class Vgg19Extractor(nn.Module):
    """Pretrained VGG-19 features tapped after relu3_1, relu4_1, relu5_1.

    Inputs in [-1, 1] are remapped to [0, 1] and normalized with the
    standard channel statistics. Requires torchvision weights, so this
    is only available when they can be loaded from disk or downloaded.
    """

    TAPS = (11, 20, 29)
    MEAN = (0.485, 0.456, 0.406)
    STD = (0.229, 0.224, 0.225)

    def __init__(self):
        super().__init__()
        try:
            from torchvision.models import VGG19_Weights, vgg19

            features = vgg19(weights=VGG19_Weights.IMAGENET1K_V1).features
        except Exception as exc:  # pragma: no cover - depends on weight availability
            raise RuntimeError(f"pretrained VGG-19 weights unavailable: {exc}") from exc
        self.slices = nn.ModuleList()
        prev = 0
        for tap in self.TAPS:
            self.slices.append(nn.Sequential(*[features[i] for i in range(prev, tap + 1)]))
            prev = tap + 1
        self.register_buffer("mean", torch.tensor(self.MEAN).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor(self.STD).view(1, 3, 1, 1))
        self.requires_grad_(False)

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        x = ((x + 1.0) / 2.0 - self.mean) / self.std
        feats = []
        for block in self.slices:
            x = block(x)
            feats.append(x)
        return feats
