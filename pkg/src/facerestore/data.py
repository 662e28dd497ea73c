"""Dataset access and online batch synthesis.

Training reads clean faces (and label maps) from parallel directories
and manufactures the degraded inputs on the fly, one fresh degradation
per sample per step, all derived from the run seed so every batch is
reproducible.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .degrade import degrade, derive_seed, sample_params
from .imgproc import load_image, load_label_map, resize_image, resize_label_map

# stream ids for seed derivation, so consumers never collide
STREAM_FILE = 0
STREAM_BATCH = 1
STREAM_DEGRADE = 2
STREAM_EVAL = 3

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


class PairedImageFolder:
    """Clean faces plus optional label maps, matched by file stem.

    Decoded arrays are cached; datasets here are small enough that the
    cache is a net win over re-decoding every step.
    """

    def __init__(self, hq_dir: str | Path, label_dir: str | Path | None = None, resolution: int = 512):
        self.hq_dir = Path(hq_dir)
        self.label_dir = Path(label_dir) if label_dir else None
        self.resolution = resolution
        if not self.hq_dir.is_dir():
            raise FileNotFoundError(f"image directory not found: {self.hq_dir}")
        self.files = sorted(p for p in self.hq_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        if not self.files:
            raise ValueError(f"dataset empty: no images in {self.hq_dir}")
        if self.label_dir is not None:
            missing = [p.name for p in self.files if not self._label_path(p).exists()]
            if missing:
                raise FileNotFoundError(f"label maps missing for: {', '.join(missing[:5])}")
        self._hq_cache: dict[int, np.ndarray] = {}
        self._label_cache: dict[int, np.ndarray] = {}

    def _label_path(self, hq_path: Path) -> Path:
        return self.label_dir / (hq_path.stem + ".png")

    def __len__(self) -> int:
        return len(self.files)

    def hq(self, index: int) -> np.ndarray:
        if index not in self._hq_cache:
            path = self.files[index]
            try:
                img = load_image(path)
            except Exception as exc:
                raise IOError(f"failed to load {path}: {exc}") from exc
            self._hq_cache[index] = resize_image(img, self.resolution, "bicubic")
        return self._hq_cache[index]

    def labels(self, index: int) -> np.ndarray:
        if self.label_dir is None:
            raise ValueError("dataset has no label directory")
        if index not in self._label_cache:
            path = self._label_path(self.files[index])
            try:
                labels = load_label_map(path)
            except Exception as exc:
                raise IOError(f"failed to load {path}: {exc}") from exc
            self._label_cache[index] = resize_label_map(labels, self.resolution)
        return self._label_cache[index]


def batch_indices(dataset_size: int, batch: int, seed: int, step: int) -> np.ndarray:
    """Indices for one training step, a pure function of (seed, step)."""
    rng = np.random.default_rng(derive_seed(seed, STREAM_BATCH, step))
    return rng.integers(0, dataset_size, size=batch)


def degrade_batch(images: list[np.ndarray], seed: int, step: int, size: int) -> list[np.ndarray]:
    """Degrade each image with params derived from (seed, step, position)."""
    out = []
    for k, img in enumerate(images):
        params = sample_params(derive_seed(seed, STREAM_DEGRADE, step, k))
        out.append(degrade(img, params, size=size))
    return out


def fixed_eval_degradation(dataset: PairedImageFolder, seed: int) -> list[np.ndarray]:
    """One frozen degraded copy of every dataset image, for evaluation."""
    out = []
    for i in range(len(dataset)):
        params = sample_params(derive_seed(seed, STREAM_EVAL, i))
        out.append(degrade(dataset.hq(i), params, size=dataset.resolution))
    return out
