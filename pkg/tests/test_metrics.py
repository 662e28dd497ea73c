"""Metric identities and dual-route oracles."""

import math

import numpy as np
import pytest
import scipy.linalg

from facerestore import metrics as M


def _image(seed=0, size=64):
    rng = np.random.default_rng(seed)
    return rng.integers(0, 256, (size, size, 3), dtype=np.uint8)


def _luma_oracle(img):
    x = img.astype(np.float64)
    return 0.299 * x[..., 0] + 0.587 * x[..., 1] + 0.114 * x[..., 2]


def _ssim_scalar_oracle(a, b):
    """Direct per-window SSIM on luma: independent loops, valid coverage."""
    x, y = _luma_oracle(a), _luma_oracle(b)
    half = (11 - 1) / 2.0
    coords = np.arange(11) - half
    g = np.exp(-(coords**2) / (2.0 * 1.5**2))
    win = np.outer(g, g)
    win /= win.sum()
    c1, c2 = (0.01 * 255) ** 2, (0.03 * 255) ** 2
    vals = []
    for i in range(x.shape[0] - 10):
        for j in range(x.shape[1] - 10):
            # convolution flips the kernel; the window is symmetric, so
            # plain weighted sums match the implementation's conv2d
            wx = x[i : i + 11, j : j + 11]
            wy = y[i : i + 11, j : j + 11]
            mx, my = (win * wx).sum(), (win * wy).sum()
            sxx = (win * wx * wx).sum() - mx * mx
            syy = (win * wy * wy).sum() - my * my
            sxy = (win * wx * wy).sum() - mx * my
            vals.append(
                ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2))
            )
    return float(np.mean(vals))


class TestPsnr:
    def test_identical_is_inf(self):
        img = _image()
        assert M.psnr(img, img) == math.inf

    def test_uniform_offset_analytic(self):
        img = np.full((32, 32, 3), 100, np.uint8)
        shifted = img + np.uint8(16)
        expected = 10.0 * math.log10(255.0**2 / 256.0)
        assert M.psnr(img, shifted) == pytest.approx(expected, abs=1e-12)

    def test_translation_invariance(self):
        a, b = _image(1), _image(2)
        # shift both inputs by the same offset, away from clipping
        a2 = np.clip(a, 10, 245)
        b2 = np.clip(b, 10, 245)
        assert M.psnr(a2 + np.uint8(10), b2 + np.uint8(10)) == pytest.approx(M.psnr(a2, b2), abs=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            M.psnr(_image(size=32), _image(size=64))


class TestSsim:
    def test_self_is_one(self):
        img = _image(3)
        assert M.ssim(img, img) == pytest.approx(1.0, abs=1e-12)

    def test_inverted_below_half(self):
        img = _image(4)
        assert M.ssim(img, 255 - img) < 0.5

    def test_symmetry(self):
        a, b = _image(5), _image(6)
        assert M.ssim(a, b) == pytest.approx(M.ssim(b, a), abs=1e-15)

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(7)
        a = rng.integers(0, 256, (24, 24, 3), dtype=np.uint8)
        b = np.clip(a.astype(int) + rng.integers(-30, 31, a.shape), 0, 255).astype(np.uint8)
        assert M.ssim(a, b) == pytest.approx(_ssim_scalar_oracle(a, b), abs=1e-10)

    def test_too_small_rejected(self):
        tiny = _image(size=8)
        with pytest.raises(ValueError):
            M.ssim(tiny, tiny)


class TestMsSsim:
    def test_self_is_one(self):
        img = _image(8, size=192)
        assert M.ms_ssim(img, img) == pytest.approx(1.0, abs=1e-6)

    def test_degraded_below_one(self):
        img = _image(9, size=192)
        noisy = np.clip(img.astype(int) + np.random.default_rng(0).integers(-40, 41, img.shape), 0, 255).astype(np.uint8)
        assert M.ms_ssim(img, noisy) < 0.99

    def test_min_size_enforced(self):
        img = _image(10, size=128)
        with pytest.raises(ValueError):
            M.ms_ssim(img, img)


def _sqrtm_oracle(s1, s2):
    """Independent route: Schur-method matrix square root of the product."""
    covmean = scipy.linalg.sqrtm(s1.cov @ s2.cov)
    if np.iscomplexobj(covmean):
        covmean = covmean.real
    diff = s1.mean - s2.mean
    return float(diff @ diff + np.trace(s1.cov + s2.cov - 2.0 * covmean))


class TestFrechet:
    def test_one_dimensional_closed_form(self):
        s1 = M.FeatureStats(np.array([0.0]), np.array([[1.0]]), 10)
        s2 = M.FeatureStats(np.array([3.0]), np.array([[4.0]]), 10)
        # |0-3|^2 + (1 + 4 - 2*sqrt(4)) = 9 + 1
        assert M.frechet_distance(s1, s2) == pytest.approx(10.0, abs=1e-9)

    def test_identical_stats_zero(self):
        feats = np.random.default_rng(1).normal(size=(64, 4))
        s = M.FeatureStats.from_features(feats)
        assert M.frechet_distance(s, s) == pytest.approx(0.0, abs=1e-8)

    def test_symmetry(self):
        rng = np.random.default_rng(2)
        s1 = M.FeatureStats.from_features(rng.normal(size=(40, 5)))
        s2 = M.FeatureStats.from_features(rng.normal(loc=0.5, size=(48, 5)))
        assert M.frechet_distance(s1, s2) == pytest.approx(M.frechet_distance(s2, s1), abs=1e-8)

    def test_matches_sqrtm_oracle(self):
        rng = np.random.default_rng(3)
        for trial in range(10):
            a = rng.normal(size=(50 + trial, 4))
            b = rng.normal(loc=rng.normal(size=4), size=(60 + trial, 4)) @ rng.normal(size=(4, 4)) * 0.5
            s1 = M.FeatureStats.from_features(a)
            s2 = M.FeatureStats.from_features(b)
            assert M.frechet_distance(s1, s2) == pytest.approx(_sqrtm_oracle(s1, s2), abs=1e-5)

    def test_non_psd_rejected(self):
        bad = M.FeatureStats(np.zeros(2), np.array([[1.0, 0.0], [0.0, -1e-3]]), 10)
        good = M.FeatureStats(np.zeros(2), np.eye(2), 10)
        with pytest.raises(ValueError):
            M.frechet_distance(bad, good)

    def test_dim_mismatch_rejected(self):
        s1 = M.FeatureStats(np.zeros(2), np.eye(2), 10)
        s2 = M.FeatureStats(np.zeros(3), np.eye(3), 10)
        with pytest.raises(ValueError):
            M.frechet_distance(s1, s2)


class TestFeatureStats:
    def test_matches_numpy(self):
        feats = np.random.default_rng(4).normal(size=(30, 6))
        s = M.FeatureStats.from_features(feats)
        np.testing.assert_allclose(s.mean, feats.mean(axis=0))
        np.testing.assert_allclose(s.cov, np.cov(feats, rowvar=False))
        assert s.n == 30

    def test_needs_two_rows(self):
        with pytest.raises(ValueError):
            M.FeatureStats.from_features(np.zeros((1, 4)))


class TestFeatureFiles:
    def test_roundtrip(self, tmp_path):
        feats = np.random.default_rng(5).normal(size=(17, 9)).astype(np.float32)
        path = tmp_path / "feats.bin"
        M.save_features(path, feats)
        loaded = M.load_features(path)
        np.testing.assert_array_equal(loaded.astype(np.float32), feats)

    def test_header_layout(self, tmp_path):
        import struct

        feats = np.arange(12, dtype=np.float32).reshape(3, 4)
        path = tmp_path / "feats.bin"
        M.save_features(path, feats)
        raw = path.read_bytes()
        assert raw[:4] == M.FEATURE_MAGIC
        d, n = struct.unpack("<II", raw[4:12])
        assert (d, n) == (4, 3)
        assert len(raw) == 12 + 4 * 12

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(ValueError):
            M.load_features(path)

    def test_truncated(self, tmp_path):
        feats = np.ones((4, 4), np.float32)
        path = tmp_path / "feats.bin"
        M.save_features(path, feats)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(ValueError):
            M.load_features(path)
