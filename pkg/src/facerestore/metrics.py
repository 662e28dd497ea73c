"""Full-reference image quality metrics and feature-distribution distance.

PSNR is computed over all channels; SSIM and MS-SSIM operate on the
ITU-R BT.601 luma plane with the standard 11x11 Gaussian window
(sigma 1.5, K1 0.01, K2 0.03) and valid-mode filtering, so no padding
convention leaks into the score.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import convolve2d

from .imgproc import check_image

MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
FEATURE_MAGIC = b"FEA1"


def _luma(img: np.ndarray) -> np.ndarray:
    check_image(img)
    x = img.astype(np.float64)
    return 0.299 * x[..., 0] + 0.587 * x[..., 1] + 0.114 * x[..., 2]


def _check_pair(a: np.ndarray, b: np.ndarray) -> None:
    check_image(a)
    check_image(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for 8-bit images; inf when identical."""
    _check_pair(a, b)
    mse = np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2)
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0**2 / mse)


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    window = np.outer(g, g)
    return window / window.sum()


def _ssim_and_cs(x: np.ndarray, y: np.ndarray, data_range: float) -> tuple[float, float]:
    """Mean SSIM and mean contrast-structure term over valid windows."""
    win = _gaussian_window()
    if x.shape[0] < win.shape[0] or x.shape[1] < win.shape[1]:
        raise ValueError(f"image {x.shape} smaller than the {win.shape[0]}x{win.shape[1]} window")
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    mu_x = convolve2d(x, win, mode="valid")
    mu_y = convolve2d(y, win, mode="valid")
    sxx = convolve2d(x * x, win, mode="valid") - mu_x**2
    syy = convolve2d(y * y, win, mode="valid") - mu_y**2
    sxy = convolve2d(x * y, win, mode="valid") - mu_x * mu_y
    cs_map = (2.0 * sxy + c2) / (sxx + syy + c2)
    ssim_map = (2.0 * mu_x * mu_y + c1) / (mu_x**2 + mu_y**2 + c1) * cs_map
    return float(ssim_map.mean()), float(cs_map.mean())


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Structural similarity on the luma plane, range [-1, 1]."""
    _check_pair(a, b)
    value, _ = _ssim_and_cs(_luma(a), _luma(b), 255.0)
    return value


def _downsample2(x: np.ndarray) -> np.ndarray:
    h, w = x.shape[0] - x.shape[0] % 2, x.shape[1] - x.shape[1] % 2
    x = x[:h, :w]
    return (x[0::2, 0::2] + x[1::2, 0::2] + x[0::2, 1::2] + x[1::2, 1::2]) / 4.0


def ms_ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Multi-scale SSIM over 5 dyadic levels with the canonical weights.

    Requires both sides to be at least ``11 * 2**4`` pixels so the
    coarsest level still fits the window.
    """
    _check_pair(a, b)
    min_side = 11 * 2 ** (len(MS_SSIM_WEIGHTS) - 1)
    if min(a.shape[0], a.shape[1]) < min_side:
        raise ValueError(f"ms_ssim needs images of at least {min_side} pixels per side")
    x, y = _luma(a), _luma(b)
    value = 1.0
    for level, weight in enumerate(MS_SSIM_WEIGHTS):
        ssim_l, cs_l = _ssim_and_cs(x, y, 255.0)
        if level < len(MS_SSIM_WEIGHTS) - 1:
            value *= max(cs_l, 0.0) ** weight
            x, y = _downsample2(x), _downsample2(y)
        else:
            value *= max(ssim_l, 0.0) ** weight
    return float(value)


@dataclass(frozen=True)
class FeatureStats:
    """Mean and covariance of an embedded-feature sample."""

    mean: np.ndarray
    cov: np.ndarray
    n: int

    @classmethod
    def from_features(cls, feats: np.ndarray) -> "FeatureStats":
        feats = np.asarray(feats, dtype=np.float64)
        if feats.ndim != 2:
            raise ValueError(f"expected an (n, d) feature array, got shape {feats.shape}")
        n = feats.shape[0]
        if n < 2:
            raise ValueError(f"need at least 2 feature rows, got {n}")
        return cls(mean=feats.mean(axis=0), cov=np.cov(feats, rowvar=False), n=n)

    def validate(self) -> None:
        if self.mean.ndim != 1 or self.cov.shape != (self.mean.size, self.mean.size):
            raise ValueError("mean/cov dimension mismatch")
        if not np.allclose(self.cov, self.cov.T, atol=1e-8):
            raise ValueError("covariance is not symmetric")


def _clipped_eigvals(w: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    if np.any(w < -tol):
        raise ValueError(f"matrix is not PSD: smallest eigenvalue {w.min():.3e}")
    return np.clip(w, 0.0, None)


def _psd_sqrt(c: np.ndarray) -> np.ndarray:
    sym = (c + c.T) / 2.0
    w, v = np.linalg.eigh(sym)
    w = _clipped_eigvals(w)
    return (v * np.sqrt(w)) @ v.T


def frechet_distance(s1: FeatureStats, s2: FeatureStats) -> float:
    """Fréchet distance between two Gaussians fit to feature samples.

    ``|mu1 - mu2|^2 + tr(C1 + C2 - 2 (C1 C2)^(1/2))``; the matrix square
    root is taken by eigendecomposition, with eigenvalues in (-1e-6, 0)
    clipped to zero and anything more negative rejected.
    """
    s1.validate()
    s2.validate()
    if s1.mean.size != s2.mean.size:
        raise ValueError(f"feature dims differ: {s1.mean.size} vs {s2.mean.size}")
    mean_term = float(np.sum((s1.mean - s2.mean) ** 2))
    root1 = _psd_sqrt(s1.cov)
    inner = root1 @ s2.cov @ root1
    w = np.linalg.eigvalsh((inner + inner.T) / 2.0)
    trace_sqrt = float(np.sum(np.sqrt(_clipped_eigvals(w))))
    return mean_term + float(np.trace(s1.cov) + np.trace(s2.cov)) - 2.0 * trace_sqrt


def save_features(path: str | Path, feats: np.ndarray) -> None:
    """Write an (n, d) float array as magic + uint32 d + uint32 n + float32 rows."""
    feats = np.asarray(feats)
    if feats.ndim != 2:
        raise ValueError(f"expected an (n, d) feature array, got shape {feats.shape}")
    n, d = feats.shape
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<II", d, n))
        fh.write(feats.astype("<f4").tobytes(order="C"))


def load_features(path: str | Path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != FEATURE_MAGIC:
            raise ValueError(f"bad feature file magic in {path}")
        d, n = struct.unpack("<II", fh.read(8))
        data = np.frombuffer(fh.read(), dtype="<f4")
    if data.size != n * d:
        raise ValueError(f"truncated feature file {path}: expected {n * d} values, got {data.size}")
    return data.reshape(n, d).astype(np.float64)
