import math

import numpy as np
import pytest

from oracles import ssim_direct
from volcolor.metrics import MetricsConfig, evaluate, mse, psnr, ssim
from volcolor.volume import ColorVolume, ScalarVolume, VolumeError


def vol(data):
    return ScalarVolume(np.asarray(data, dtype=np.float64))


def color(r, g, b):
    return ColorVolume((vol(r), vol(g), vol(b)), "rgb")


class TestSsim:
    def test_identical_volumes(self):
        a = vol(np.random.default_rng(0).random((4, 4, 4)))
        assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)

    def test_constant_zero_vs_one(self):
        a = vol(np.zeros((4, 4, 4)))
        b = vol(np.ones((4, 4, 4)))
        cfg = MetricsConfig()
        # (2*0*1 + c1)(0 + c2) / ((0 + 1 + c1)(0 + 0 + c2)) = c1 / (1 + c1)
        expected = cfg.c1 / (1 + cfg.c1)
        assert ssim(a, b, cfg) == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(9.999e-5, rel=1e-3)

    def test_matches_direct_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(5):
            a, b = vol(rng.random((6, 5, 8))), vol(rng.random((6, 5, 8)))
            # oracle runs on the same stored (single-precision) samples
            assert ssim(a, b) == pytest.approx(ssim_direct(a.data, b.data), abs=1e-10)

    def test_symmetry(self):
        rng = np.random.default_rng(2)
        a, b = vol(rng.random((5, 5, 5))), vol(rng.random((5, 5, 5)))
        assert abs(ssim(a, b) - ssim(b, a)) < 1e-12

    def test_dims_mismatch(self):
        with pytest.raises(VolumeError):
            ssim(vol(np.zeros((2, 2, 2))), vol(np.zeros((3, 2, 2))))

    def test_windowed_mode_identity(self):
        a = vol(np.random.default_rng(3).random((12, 12, 12)))
        assert ssim(a, a, MetricsConfig(mode="windowed")) == pytest.approx(1.0, abs=1e-9)

    def test_windowed_mode_bounded(self):
        rng = np.random.default_rng(4)
        a, b = vol(rng.random((12, 12, 12))), vol(rng.random((12, 12, 12)))
        val = ssim(a, b, MetricsConfig(mode="windowed"))
        assert -1.0 <= val <= 1.0


class TestMsePsnr:
    def test_identical(self):
        a = vol(np.random.default_rng(5).random((3, 3, 3)))
        assert mse(a, a) == 0.0
        assert psnr(a, a) == math.inf

    def test_constant_half_difference(self):
        a = vol(np.zeros((4, 4, 4)))
        b = vol(np.full((4, 4, 4), 0.5))
        assert mse(a, b) == pytest.approx(0.25, abs=1e-12)
        assert psnr(a, b) == pytest.approx(6.0206, abs=1e-4)

    def test_psnr_convention(self):
        # 10*log10(1/mse): an MSE of 0.052 maps to 12.84 dB under this convention
        a = vol(np.zeros((2, 2, 2)))
        b = vol(np.full((2, 2, 2), math.sqrt(0.052)))
        assert psnr(a, b) == pytest.approx(10 * math.log10(1 / 0.052), rel=1e-6)
        assert psnr(a, b) == pytest.approx(12.84, abs=0.005)

    def test_psnr_strictly_decreasing_in_mse(self):
        a = vol(np.zeros((3, 3, 3)))
        values = [psnr(a, vol(np.full((3, 3, 3), d))) for d in (0.1, 0.2, 0.4, 0.8)]
        assert all(x > y for x, y in zip(values, values[1:]))

    def test_triangle_ish(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            a, b, c = (vol(rng.random((4, 4, 4))) for _ in range(3))
            assert mse(a, b) <= 2 * (mse(a, c) + mse(c, b)) + 1e-12


class TestEvaluate:
    def test_identical_color_volumes(self):
        rng = np.random.default_rng(7)
        a = color(*(rng.random((4, 4, 4)) for _ in range(3)))
        report = evaluate(a, a)
        assert report.ssim == pytest.approx(1.0, abs=1e-12)
        assert report.mse == 0.0
        assert report.psnr == math.inf
        for ch in ("r", "g", "b"):
            assert report.per_channel[ch]["mse"] == 0.0

    def test_channel_permutation_symmetry(self):
        rng = np.random.default_rng(8)
        chans_a = [rng.random((4, 4, 4)) for _ in range(3)]
        chans_b = [rng.random((4, 4, 4)) for _ in range(3)]
        rep = evaluate(color(*chans_a), color(*chans_b))
        rep_perm = evaluate(
            color(chans_a[1], chans_a[2], chans_a[0]),
            color(chans_b[1], chans_b[2], chans_b[0]),
        )
        assert rep_perm.per_channel["r"]["mse"] == pytest.approx(
            rep.per_channel["g"]["mse"], abs=1e-15
        )
        assert rep_perm.mse == pytest.approx(rep.mse, abs=1e-12)

    def test_average_is_arithmetic_mean(self):
        base = np.zeros((5, 5, 5))
        a = color(base, base, base)
        b = color(base + 0.1, base + 0.2, base + 0.1)
        report = evaluate(a, b)
        assert report.per_channel["r"]["mse"] == pytest.approx(0.01, rel=1e-6)
        assert report.per_channel["g"]["mse"] == pytest.approx(0.04, rel=1e-6)
        assert report.mse == pytest.approx(0.02, rel=1e-6)

    def test_space_tag_mismatch(self):
        a = color(np.zeros((2, 2, 2)), np.zeros((2, 2, 2)), np.zeros((2, 2, 2)))
        b = ColorVolume(a.channels, "yuv")
        with pytest.raises(VolumeError):
            evaluate(a, b)

    def test_json_serialization(self):
        rng = np.random.default_rng(9)
        a = color(*(rng.random((3, 3, 3)) for _ in range(3)))
        doc = evaluate(a, a).to_json()
        assert '"ssim"' in doc and '"per_channel"' in doc and '"inf"' in doc


def test_config_validation():
    with pytest.raises(VolumeError):
        MetricsConfig(c1=0)
    with pytest.raises(VolumeError):
        MetricsConfig(mode="local")
