"""Spectral weight normalization via power iteration.

Each wrapped convolution keeps a persistent left singular vector
estimate ``weight_u`` and refreshes it with one power iteration per
training-mode forward; evaluation forwards reuse the stored estimate
without mutating it.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

_EPS = 1e-12


def _power_iterate(w2d: torch.Tensor, u: torch.Tensor, steps: int) -> tuple[torch.Tensor, torch.Tensor]:
    v = F.normalize(w2d.t() @ u, dim=0, eps=_EPS)
    for _ in range(steps):
        v = F.normalize(w2d.t() @ u, dim=0, eps=_EPS)
        u = F.normalize(w2d @ v, dim=0, eps=_EPS)
    return u, v


def spectral_normalize(weight: torch.Tensor, u: torch.Tensor | None = None, steps: int = 1) -> tuple[torch.Tensor, torch.Tensor]:
    """Divide a weight by its estimated top singular value.

    The weight is viewed as (rows, -1) 2-D; ``u`` is the persistent
    estimate of the top left singular vector (random if omitted) and the
    updated ``u`` is returned alongside the normalized weight.
    """
    w2d = weight.reshape(weight.shape[0], -1)
    if u is None:
        u = F.normalize(torch.randn(w2d.shape[0], dtype=w2d.dtype, device=w2d.device), dim=0, eps=_EPS)
    with torch.no_grad():
        u, v = _power_iterate(w2d.detach(), u, steps)
    sigma = torch.dot(u, torch.mv(w2d, v))
    return weight / sigma, u


class SNConv2d(nn.Conv2d):
    """Conv2d whose effective weight is spectrally normalized.

    Training-mode forwards advance the power iteration by one step;
    ``refresh(n)`` runs extra iterations to tighten the estimate before
    inspection. ``weight_u`` is a buffer, so checkpoints capture it.
    """

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        u0 = torch.randn(self.out_channels)
        self.register_buffer("weight_u", F.normalize(u0, dim=0, eps=_EPS))

    def refresh(self, steps: int = 20, tol: float = 1e-9, max_steps: int = 50_000) -> None:
        """Tighten ``weight_u`` with at least ``steps`` power iterations.

        Iteration continues past ``steps`` until the singular-value
        estimate is stationary; near-tied top singular values otherwise
        leave the estimate visibly short of the true norm.
        """
        with torch.no_grad():
            w2d = self.weight.reshape(self.out_channels, -1)
            u = self.weight_u
            sigma_prev = 0.0
            done = 0
            while done < max_steps:
                chunk = max(steps - done, 32) if done < steps else 32
                u, v = _power_iterate(w2d, u, chunk)
                done += chunk
                sigma = float(torch.dot(u, torch.mv(w2d, v)))
                if done >= steps and abs(sigma - sigma_prev) <= tol * max(sigma, _EPS):
                    break
                sigma_prev = sigma
            self.weight_u.copy_(u)

    def effective_weight(self, update: bool = False) -> torch.Tensor:
        w2d = self.weight.reshape(self.out_channels, -1)
        with torch.no_grad():
            u, v = _power_iterate(w2d.detach(), self.weight_u, 1 if update else 0)
            if update:
                self.weight_u.copy_(u)
        sigma = torch.dot(u, torch.mv(w2d, v))
        return self.weight / sigma

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self._conv_forward(x, self.effective_weight(update=self.training), self.bias)


def sn_modules(root: nn.Module) -> list[SNConv2d]:
    """All spectrally normalized convolutions under a module."""
    return [m for m in root.modules() if isinstance(m, SNConv2d)]
