import numpy as np
import pytest

from volcolor.phantoms import CHROMA_PALETTE, PhantomSpec, generate, structural_proxy
from volcolor.volume import VolumeError


class TestGenerate:
    def test_two_blob_has_two_regions(self):
        spec = PhantomSpec(kind="two-blob", dims=(16, 16, 16), levels=(0.2, 0.8))
        y, mask, labels, _ = generate(spec)
        assert set(np.unique(labels[mask.data])) == {1, 2}
        assert set(np.unique(labels[~mask.data])) == {0}

    def test_two_blob_is_piecewise_constant_without_noise(self):
        spec = PhantomSpec(kind="two-blob", dims=(16, 16, 16), levels=(0.2, 0.8))
        y, mask, labels, _ = generate(spec)
        assert np.all(y.data[labels == 1] == np.float32(0.2))
        assert np.all(y.data[labels == 2] == np.float32(0.8))

    def test_concentric_shells_radial_bands(self):
        spec = PhantomSpec(kind="concentric-shells", dims=(32, 32, 32), levels=(0.2, 0.5, 0.8))
        y, mask, labels, _ = generate(spec)
        c = 15.5
        i, j, k = np.meshgrid(*(np.arange(32),) * 3, indexing="ij")
        rr = np.sqrt((i - c) ** 2 + (j - c) ** 2 + (k - c) ** 2)
        r_max = 0.45 * 32
        band = r_max / 3
        inside = rr <= r_max
        expected = np.zeros((32, 32, 32), np.int32)
        expected[inside] = np.minimum((rr[inside] / band).astype(np.int32), 2) + 1
        assert np.array_equal(labels, expected)

    def test_deterministic(self):
        spec = PhantomSpec(kind="two-blob", dims=(12, 12, 12), noise_sigma=0.05, seed=3)
        a = generate(spec)
        b = generate(spec)
        assert np.array_equal(a[0].data, b[0].data)
        assert np.array_equal(a[2], b[2])

    def test_label_chroma_consistency(self):
        for kind in ("two-blob", "concentric-shells", "checker", "ramp"):
            spec = PhantomSpec(kind=kind, dims=(12, 12, 12), levels=(0.2, 0.5, 0.8))
            _, _, labels, reference = generate(spec)
            _, u, v = reference.arrays()
            for region in range(1, int(labels.max()) + 1):
                cu, cv = CHROMA_PALETTE[(region - 1) % len(CHROMA_PALETTE)]
                sel = labels == region
                assert np.all(u[sel] == np.float32(cu))
                assert np.all(v[sel] == np.float32(cv))

    def test_reference_luminance_matches_phantom(self):
        spec = PhantomSpec(kind="checker", dims=(8, 8, 8))
        y, _, _, reference = generate(spec)
        assert np.array_equal(reference.channels[0].data, y.data)

    def test_ramp_profile(self):
        spec = PhantomSpec(kind="ramp", dims=(10, 4, 4), levels=(0.1, 0.9))
        y, mask, _, _ = generate(spec)
        assert np.all(mask.data)
        assert y.data[0, 0, 0] == np.float32(0.1)
        assert y.data[9, 0, 0] == np.float32(0.9)
        assert np.all(np.diff(y.data[:, 0, 0]) > 0)

    def test_noise_clipped_and_foreground_only(self):
        spec = PhantomSpec(kind="two-blob", dims=(12, 12, 12), noise_sigma=0.2, seed=1)
        y, mask, _, _ = generate(spec)
        assert y.data.min() >= 0.0 and y.data.max() <= 1.0
        assert np.all(y.data[~mask.data] == 0)

    def test_invalid_specs(self):
        with pytest.raises(VolumeError):
            PhantomSpec(kind="spiral")
        with pytest.raises(VolumeError):
            PhantomSpec(dims=(3, 8, 8))
        with pytest.raises(VolumeError):
            PhantomSpec(levels=(0.5, 1.2))


def test_structural_proxy_differs_but_correlates():
    spec = PhantomSpec(kind="two-blob", dims=(16, 16, 16))
    y, mask, _, _ = generate(spec)
    proxy = structural_proxy(y)
    assert proxy.dims == y.dims
    assert not np.array_equal(proxy.data, y.data)
    fg = mask.data
    corr = np.corrcoef(proxy.data[fg], y.data[fg])[0, 1]
    assert corr > 0.5
