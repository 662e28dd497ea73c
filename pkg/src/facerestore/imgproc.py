"""Image loading, saving, and tensor conversion helpers.

Images are RGB uint8 arrays of shape (H, W, 3); label maps are uint8
arrays of shape (H, W) holding class indices. Network tensors are
float32, channel-first, with pixel values in [-1, 1].
"""

from __future__ import annotations

from pathlib import Path

import cv2
import numpy as np
import torch

INTERP_FLAGS = {
    "nearest": cv2.INTER_NEAREST,
    "bilinear": cv2.INTER_LINEAR,
    "bicubic": cv2.INTER_CUBIC,
    "area": cv2.INTER_AREA,
}


def check_image(img: np.ndarray) -> None:
    if not isinstance(img, np.ndarray) or img.dtype != np.uint8:
        raise ValueError("expected a uint8 array")
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got shape {tuple(img.shape)}")


def load_image(path: str | Path) -> np.ndarray:
    """Read an image file as RGB uint8, raising with file context on failure."""
    data = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if data is None:
        raise IOError(f"cannot read image: {path}")
    return cv2.cvtColor(data, cv2.COLOR_BGR2RGB)


def save_image(path: str | Path, img: np.ndarray) -> None:
    check_image(img)
    ok = cv2.imwrite(str(path), cv2.cvtColor(img, cv2.COLOR_RGB2BGR))
    if not ok:
        raise IOError(f"cannot write image: {path}")


def load_label_map(path: str | Path) -> np.ndarray:
    """Read a single-channel label-map PNG (pixel value = class index)."""
    data = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
    if data is None:
        raise IOError(f"cannot read label map: {path}")
    return data.astype(np.uint8)


def save_label_map(path: str | Path, labels: np.ndarray) -> None:
    if labels.ndim != 2:
        raise ValueError(f"expected an (H, W) label map, got shape {tuple(labels.shape)}")
    ok = cv2.imwrite(str(path), labels.astype(np.uint8))
    if not ok:
        raise IOError(f"cannot write label map: {path}")


def resize_image(img: np.ndarray, size: int | tuple[int, int], interp: str = "bicubic") -> np.ndarray:
    """Resize to (size, size) or an (h, w) pair; same-size calls are exact no-ops."""
    if isinstance(size, int):
        size = (size, size)
    h, w = size
    if img.shape[0] == h and img.shape[1] == w:
        return img.copy()
    return cv2.resize(img, (w, h), interpolation=INTERP_FLAGS[interp])


def resize_label_map(labels: np.ndarray, size: int | tuple[int, int]) -> np.ndarray:
    """Resize a label map with nearest-neighbor sampling so indices stay valid."""
    if isinstance(size, int):
        size = (size, size)
    h, w = size
    if labels.shape[0] == h and labels.shape[1] == w:
        return labels.copy()
    return cv2.resize(labels, (w, h), interpolation=cv2.INTER_NEAREST)


def to_tensor(img: np.ndarray) -> torch.Tensor:
    """uint8 (H, W, 3) in [0, 255] -> float32 (3, H, W) in [-1, 1]."""
    check_image(img)
    t = torch.from_numpy(np.ascontiguousarray(img.transpose(2, 0, 1)))
    return t.float() / 127.5 - 1.0


def from_tensor(t: torch.Tensor) -> np.ndarray:
    """float (3, H, W) in [-1, 1] -> uint8 (H, W, 3); clamps then rounds."""
    if t.dim() != 3 or t.shape[0] != 3:
        raise ValueError(f"expected a (3, H, W) tensor, got shape {tuple(t.shape)}")
    arr = ((t.detach().float().clamp(-1.0, 1.0) + 1.0) * 127.5).round()
    return arr.to(torch.uint8).cpu().numpy().transpose(1, 2, 0)


def stack_to_tensor(imgs: list[np.ndarray]) -> torch.Tensor:
    """Stack uint8 images into a (B, 3, H, W) batch tensor in [-1, 1]."""
    return torch.stack([to_tensor(im) for im in imgs], dim=0)
