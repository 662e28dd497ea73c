"""Shared fixtures: synthetic face data and the acceptance summary."""

from __future__ import annotations

import re
from pathlib import Path

import cv2
import numpy as np
import pytest

from facerestore.imgproc import save_image, save_label_map

# class indices used by the synthetic faces: background, skin, nose, hair
SYNTH_CLASSES = (0, 1, 10, 17)


def synthetic_face(seed: int, size: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """A crude procedural face: big color-coded regions that a small net can learn."""
    rng = np.random.default_rng(seed)
    img = np.zeros((size, size, 3), np.uint8)
    labels = np.zeros((size, size), np.uint8)

    def jitter(base):
        return tuple(int(np.clip(b + rng.integers(-20, 21), 0, 255)) for b in base)

    img[:] = jitter((70, 90, 160))  # bluish background
    cx = size // 2 + int(rng.integers(-size // 10, size // 10 + 1))
    cy = size // 2 + int(rng.integers(-size // 10, size // 10 + 1))
    ax = int(size * 0.32 + rng.integers(-2, 3))
    ay = int(size * 0.40 + rng.integers(-2, 3))
    cv2.ellipse(img, (cx, cy), (ax, ay), 0, 0, 360, jitter((205, 170, 140)), -1)
    mask = np.zeros((size, size), np.uint8)
    cv2.ellipse(mask, (cx, cy), (ax, ay), 0, 0, 360, 1, -1)
    labels[mask == 1] = 1  # skin
    hair_h = int(size * 0.22 + rng.integers(-2, 3))
    cv2.rectangle(img, (0, 0), (size - 1, hair_h), jitter((40, 25, 20)), -1)
    labels[: hair_h + 1, :] = 17  # hair
    nr = max(2, size // 12)
    cv2.circle(img, (cx, cy + size // 16), nr, jitter((230, 120, 110)), -1)
    nmask = np.zeros((size, size), np.uint8)
    cv2.circle(nmask, (cx, cy + size // 16), nr, 1, -1)
    labels[nmask == 1] = 10  # nose
    return img, labels


def write_dataset(root: Path, count: int, size: int = 64, seed: int = 0) -> tuple[Path, Path]:
    """Write matched image/label folders and return their paths."""
    hq_dir, label_dir = root / "hq", root / "labels"
    hq_dir.mkdir(parents=True, exist_ok=True)
    label_dir.mkdir(parents=True, exist_ok=True)
    for i in range(count):
        img, labels = synthetic_face(seed + i, size)
        save_image(hq_dir / f"face_{i:03d}.png", img)
        save_label_map(label_dir / f"face_{i:03d}.png", labels)
    return hq_dir, label_dir


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion at the end of the run."""
    results: dict[str, str] = {}
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance.py::" not in nodeid:
                continue
            name = nodeid.split("::")[-1]
            status = "PASS" if outcome == "passed" else "FAIL"
            # setup/teardown failures count as failures for their test
            if name not in results or status == "FAIL":
                results[name] = status
    if not results:
        return
    terminalreporter.write_line("")
    terminalreporter.write_line("acceptance criteria:")
    def criterion_key(name: str):
        match = re.search(r"_c(\d+)_", name)
        return int(match.group(1)) if match else 99
    for name in sorted(results, key=criterion_key):
        terminalreporter.write_line(f"  {name}: {results[name]}")
