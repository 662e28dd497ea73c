"""Synthetic degradation: blur, downsample, additive noise, JPEG, upsample.

Low-quality training inputs are manufactured online from clean faces by
composing four corruptions in a fixed order. All randomness is derived
from explicit integer seeds so any degraded image can be reproduced
bit-for-bit from (clean image, params).
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import cv2
import numpy as np

from .imgproc import INTERP_FLAGS, check_image

BLUR_KINDS = ("none", "gaussian", "average", "median", "motion")
INTERP_MODES = ("nearest", "bilinear", "bicubic", "area")

BLUR_PROB = 0.5
NOISE_PROB = 0.2
JPEG_PROB = 0.7
NOISE_PER_CHANNEL_PROB = 0.5

KERNEL_MIN, KERNEL_MAX = 3, 15
MOTION_MIN, MOTION_MAX = 5, 25
SCALE_MIN, SCALE_MAX = 32.0 / 512.0, 256.0 / 512.0
NOISE_SIGMA_MAX = 0.1 * 255.0
JPEG_LEVEL_MIN, JPEG_LEVEL_MAX = 10, 65


@dataclass(frozen=True)
class DegradationParams:
    """One fully-specified degradation draw.

    ``blur_kind == "none"`` disables blurring, ``noise_sigma == 0``
    disables noise, and ``jpeg_quality is None`` disables compression.
    ``jpeg_quality`` stores the compression level (higher = stronger
    compression); the encoder quality used is ``100 - jpeg_quality``.
    ``noise_seed`` fixes the noise realization so ``degrade`` is a pure
    function of its arguments.
    """

    blur_kind: str
    blur_size: int
    motion_angle: float
    scale: float
    downsample_interp: str
    noise_sigma: float
    noise_per_channel: bool
    jpeg_quality: Optional[int]
    noise_seed: int

    def validate(self) -> None:
        """Check the sampled-range invariants (identity-style params skip this)."""
        if self.blur_kind not in BLUR_KINDS:
            raise ValueError(f"unknown blur kind: {self.blur_kind!r}")
        if self.blur_kind in ("gaussian", "average", "median"):
            if not KERNEL_MIN <= self.blur_size <= KERNEL_MAX:
                raise ValueError(f"blur size {self.blur_size} outside [{KERNEL_MIN}, {KERNEL_MAX}]")
            if self.blur_size % 2 == 0:
                raise ValueError("blur kernels must be odd-sized")
        elif self.blur_kind == "motion":
            if not MOTION_MIN <= self.blur_size <= MOTION_MAX:
                raise ValueError(f"motion length {self.blur_size} outside [{MOTION_MIN}, {MOTION_MAX}]")
        if not SCALE_MIN <= self.scale <= SCALE_MAX:
            raise ValueError(f"scale {self.scale} outside [{SCALE_MIN}, {SCALE_MAX}]")
        if self.downsample_interp not in INTERP_MODES:
            raise ValueError(f"unknown interpolation mode: {self.downsample_interp!r}")
        if not 0.0 <= self.noise_sigma <= NOISE_SIGMA_MAX:
            raise ValueError(f"noise sigma {self.noise_sigma} outside [0, {NOISE_SIGMA_MAX}]")
        if self.jpeg_quality is not None and not JPEG_LEVEL_MIN <= self.jpeg_quality <= JPEG_LEVEL_MAX:
            raise ValueError(f"jpeg level {self.jpeg_quality} outside [{JPEG_LEVEL_MIN}, {JPEG_LEVEL_MAX}]")

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DegradationParams":
        return cls(**json.loads(text))


def sample_params(rng_seed: int) -> DegradationParams:
    """Draw one degradation configuration from a seed.

    Blur is applied with probability 0.5, the kind uniform over the four
    families; noise with probability 0.2; JPEG with probability 0.7.
    The draw order is fixed and part of the determinism contract.
    """
    rng = np.random.default_rng(rng_seed)
    blur_kind, blur_size, motion_angle = "none", 0, 0.0
    if rng.random() < BLUR_PROB:
        blur_kind = str(rng.choice(("gaussian", "average", "median", "motion")))
        if blur_kind == "motion":
            blur_size = int(rng.integers(MOTION_MIN, MOTION_MAX + 1))
            motion_angle = float(rng.uniform(0.0, 180.0))
        else:
            # odd sizes in [3, 15]; median requires odd, the others follow suit
            blur_size = int(rng.integers(1, 8)) * 2 + 1
    scale = float(rng.uniform(SCALE_MIN, SCALE_MAX))
    interp = str(rng.choice(INTERP_MODES))
    noise_sigma, per_channel = 0.0, False
    if rng.random() < NOISE_PROB:
        noise_sigma = float(rng.uniform(0.0, NOISE_SIGMA_MAX))
        per_channel = bool(rng.random() < NOISE_PER_CHANNEL_PROB)
    jpeg_quality = None
    if rng.random() < JPEG_PROB:
        jpeg_quality = int(rng.integers(JPEG_LEVEL_MIN, JPEG_LEVEL_MAX + 1))
    noise_seed = int(rng.integers(0, 2**63 - 1))
    return DegradationParams(
        blur_kind=blur_kind,
        blur_size=blur_size,
        motion_angle=motion_angle,
        scale=scale,
        downsample_interp=interp,
        noise_sigma=noise_sigma,
        noise_per_channel=per_channel,
        jpeg_quality=jpeg_quality,
        noise_seed=noise_seed,
    )


def motion_kernel(size: int, angle_deg: float) -> np.ndarray:
    """Normalized line kernel of the given length and direction.

    Points are sampled along a centered segment and rounded to the grid;
    the y axis points down, matching image coordinates.
    """
    if size < 2:
        raise ValueError(f"motion length must be >= 2, got {size}")
    kernel = np.zeros((size, size), dtype=np.float64)
    center = (size - 1) / 2.0
    offsets = np.arange(size) - center
    theta = np.deg2rad(angle_deg)
    cols = np.rint(center + offsets * np.cos(theta)).astype(int)
    rows = np.rint(center - offsets * np.sin(theta)).astype(int)
    kernel[np.clip(rows, 0, size - 1), np.clip(cols, 0, size - 1)] = 1.0
    return kernel / kernel.sum()


def blur(img: np.ndarray, kind: str, size: int, angle: float = 0.0) -> np.ndarray:
    """Apply one blur family; ``kind == "none"`` returns an untouched copy."""
    check_image(img)
    if kind == "none":
        return img.copy()
    if kind in ("gaussian", "average", "median"):
        if not KERNEL_MIN <= size <= KERNEL_MAX:
            raise ValueError(f"blur size {size} outside [{KERNEL_MIN}, {KERNEL_MAX}]")
        if kind in ("gaussian", "median") and size % 2 == 0:
            raise ValueError(f"{kind} blur requires an odd kernel size")
        if kind == "gaussian":
            return cv2.GaussianBlur(img, (size, size), 0)
        if kind == "average":
            return cv2.blur(img, (size, size))
        return cv2.medianBlur(img, size)
    if kind == "motion":
        if not MOTION_MIN <= size <= MOTION_MAX:
            raise ValueError(f"motion length {size} outside [{MOTION_MIN}, {MOTION_MAX}]")
        return cv2.filter2D(img, -1, motion_kernel(size, angle))
    raise ValueError(f"unknown blur kind: {kind!r}")


def rescale(
    img: np.ndarray,
    factor: float,
    interp: str,
    out_size: Optional[tuple[int, int]] = None,
) -> np.ndarray:
    """Resize by a scale factor, or to ``out_size`` (h, w) when given.

    Factor-1 (or matching-size) calls return a bit-exact copy.
    """
    check_image(img)
    if interp not in INTERP_MODES:
        raise ValueError(f"unknown interpolation mode: {interp!r}")
    h, w = img.shape[:2]
    if out_size is None:
        if factor <= 0:
            raise ValueError(f"scale factor must be positive, got {factor}")
        oh = max(1, int(round(h * factor)))
        ow = max(1, int(round(w * factor)))
    else:
        oh, ow = out_size
    if (oh, ow) == (h, w):
        return img.copy()
    return cv2.resize(img, (ow, oh), interpolation=INTERP_FLAGS[interp])


def add_awgn(img: np.ndarray, sigma: float, per_channel: bool, rng: np.random.Generator) -> np.ndarray:
    """Additive white Gaussian noise in float, then round and clamp to uint8.

    ``per_channel`` draws independent noise per channel; otherwise one
    plane is shared across all three channels.
    """
    check_image(img)
    if sigma < 0:
        raise ValueError(f"noise sigma must be >= 0, got {sigma}")
    h, w = img.shape[:2]
    if per_channel:
        noise = rng.normal(0.0, sigma, size=(h, w, 3))
    else:
        noise = np.repeat(rng.normal(0.0, sigma, size=(h, w, 1)), 3, axis=2)
    out = np.rint(img.astype(np.float64) + noise)
    return np.clip(out, 0, 255).astype(np.uint8)


def jpeg_roundtrip(img: np.ndarray, quality: int) -> np.ndarray:
    """Encode to JPEG at the given encoder quality (1..100) and decode back."""
    check_image(img)
    if not 1 <= int(quality) <= 100:
        raise ValueError(f"jpeg quality {quality} outside [1, 100]")
    ok, buf = cv2.imencode(".jpg", cv2.cvtColor(img, cv2.COLOR_RGB2BGR), [cv2.IMWRITE_JPEG_QUALITY, int(quality)])
    if not ok:
        raise RuntimeError("jpeg encoding failed")
    decoded = cv2.imdecode(buf, cv2.IMREAD_COLOR)
    return cv2.cvtColor(decoded, cv2.COLOR_BGR2RGB)


def degrade(hq: np.ndarray, params: DegradationParams, size: int = 512) -> np.ndarray:
    """Full pipeline: blur, downsample, noise, JPEG, resize back to ``size``.

    The input must already be ``size``x``size``; the output always is.
    Identity params (no blur, scale 1, sigma 0, no JPEG) return the
    input bit-for-bit.
    """
    check_image(hq)
    if hq.shape[0] != size or hq.shape[1] != size:
        raise ValueError(f"expected a {size}x{size} input, got {hq.shape[0]}x{hq.shape[1]}")
    x = blur(hq, params.blur_kind, params.blur_size, params.motion_angle)
    x = rescale(x, params.scale, params.downsample_interp)
    if params.noise_sigma > 0:
        x = add_awgn(x, params.noise_sigma, params.noise_per_channel, np.random.default_rng(params.noise_seed))
    if params.jpeg_quality is not None:
        x = jpeg_roundtrip(x, 100 - params.jpeg_quality)
    return rescale(x, 1.0, "bicubic", out_size=(size, size))


def degrade_folder(
    in_dir: str | Path,
    out_dir: str | Path,
    seed: int,
    size: int = 512,
    manifest_path: Optional[str | Path] = None,
) -> int:
    """Degrade every image in a directory, writing PNGs plus a JSONL manifest.

    Per-file seeds are derived from the master seed and the sorted file
    position, so a run is reproducible regardless of filesystem order.
    Returns the number of images written.
    """
    from .imgproc import load_image, resize_image, save_image

    in_dir, out_dir = Path(in_dir), Path(out_dir)
    files = sorted(p for p in in_dir.iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg"))
    if not files:
        raise ValueError(f"no images found in {in_dir}")
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = Path(manifest_path) if manifest_path else out_dir / "params.jsonl"
    records = []
    for idx, path in enumerate(files):
        file_seed = derive_seed(seed, 0, idx)
        params = sample_params(file_seed)
        hq = resize_image(load_image(path), size, "bicubic")
        lq = degrade(hq, params, size=size)
        out_name = path.stem + ".png"
        save_image(out_dir / out_name, lq)
        records.append(json.dumps({"file": out_name, "seed": file_seed, "params": dataclasses.asdict(params)}, sort_keys=True))
    manifest_path.write_text("\n".join(records) + "\n")
    return len(files)


def derive_seed(master: int, *key: int) -> int:
    """Stable sub-seed for stream ``key`` of a master seed."""
    seq = np.random.SeedSequence(entropy=master, spawn_key=tuple(key))
    return int(seq.generate_state(1, np.uint64)[0])
