"""Histogram equalization, CLAHE, and gamma adjustment tests."""

import numpy as np
import pytest

from llnet.baselines import (
    clahe,
    clip_histogram,
    equalization_lut,
    gamma_adjust,
    hist_equalize,
)
from llnet.corpus import gamma_darken
from llnet.rng import make_rng


class TestHistEqualize:
    def test_two_level_image_maps_to_extremes(self):
        # 75% zeros, 25% ones: hand evaluation of the CDF remap gives 0 and 1
        img = np.zeros((4, 4))
        img[0, :] = 1.0
        out = hist_equalize(img)
        assert np.all(out[0, :] == 1.0)
        assert np.all(out[1:, :] == 0.0)

    def test_constant_image_maps_to_zero(self):
        # single occupied bin: the fixed convention sends it to 0
        img = np.full((6, 6), 0.7)
        out = hist_equalize(img)
        assert np.all(out == 0.0)

    def test_uniform_histogram_is_fixed_point(self):
        levels = np.arange(256, dtype=np.float64).reshape(16, 16) / 255.0
        out = hist_equalize(levels, bins=256)
        # CDF of a uniform histogram is the identity remap
        assert np.max(np.abs(out - levels)) <= 1e-12

    @pytest.mark.parametrize("seed", range(4))
    def test_mapping_monotone(self, seed):
        img = make_rng((60, seed)).random((24, 24))
        levels = np.clip(np.rint(img * 255), 0, 255).astype(int)
        hist = np.bincount(levels.ravel(), minlength=256)
        lut = equalization_lut(hist, 256)
        assert np.all(np.diff(lut) >= 0.0)
        assert lut.min() >= 0.0 and lut.max() <= 1.0

    def test_output_in_unit_interval(self):
        img = make_rng(61).random((20, 20))
        out = hist_equalize(img)
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_too_few_bins_rejected(self):
        with pytest.raises(ValueError, match="bins"):
            hist_equalize(np.zeros((4, 4)), bins=1)


class TestClipHistogram:
    def test_no_clipping_below_limit(self):
        h = np.array([5, 3, 2, 7])
        assert np.array_equal(clip_histogram(h, 10), h)

    def test_mass_preserved(self):
        rng = make_rng(62)
        h = (rng.random(64) * 100).astype(np.int64)
        clipped = clip_histogram(h, 20)
        assert clipped.sum() == h.sum()

    def test_bound_after_clipping(self):
        # pathological single-spike histogram still lands within clip + bins
        h = np.zeros(256, dtype=np.int64)
        h[0] = 4096
        clip = 40
        clipped = clip_histogram(h, clip)
        assert clipped.sum() == 4096
        assert clipped.max() <= clip + 256

    @pytest.mark.parametrize("seed", range(3))
    def test_bound_property_on_tile_histograms(self, seed):
        # realistic tiles: total mass fits under bins * clip, so the clipped
        # histogram must land within clip plus the redistribution remainder
        rng = make_rng((63, seed))
        tile = gamma_darken(rng.random((32, 32)), 2.0 + 2.0 * rng.random())
        levels = np.clip(np.rint(tile * 63), 0, 63).astype(int)
        h = np.bincount(levels.ravel(), minlength=64)
        clip = max(1, round(0.05 * tile.size))
        clipped = clip_histogram(h, clip)
        assert clipped.sum() == h.sum()
        assert clipped.max() <= clip + 64


class TestClahe:
    def test_degenerates_to_hist_equalize(self):
        img = make_rng(64).random((32, 32))
        a = clahe(img, tiles=(1, 1), clip_limit=1.0)
        b = hist_equalize(img)
        assert np.array_equal(a, b)

    def test_constant_image_stays_constant(self):
        img = np.full((32, 32), 0.4)
        out = clahe(img, tiles=(4, 4), clip_limit=0.01)
        assert np.all(out == out[0, 0])

    def test_paper_defaults_run(self):
        img = make_rng(65).random((64, 64))
        out = clahe(img, tiles=(8, 8), clip_limit=0.01, bins=256)
        assert out.shape == img.shape
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_uneven_tile_sizes_handled(self):
        img = make_rng(66).random((37, 53))
        out = clahe(img, tiles=(5, 7))
        assert out.shape == img.shape

    def test_invalid_grid_rejected(self):
        with pytest.raises(ValueError, match="tile"):
            clahe(np.zeros((4, 4)), tiles=(8, 8))
        with pytest.raises(ValueError, match="tile"):
            clahe(np.zeros((16, 16)), tiles=(0, 4))

    def test_improves_contrast_of_dark_image(self):
        rng = make_rng(67)
        img = gamma_darken(rng.random((64, 64)), 3.0)
        out = clahe(img, tiles=(8, 8), clip_limit=0.01)
        assert out.std() > img.std()


class TestGammaAdjust:
    def test_gamma_one_identity(self):
        img = make_rng(68).random((12, 12))
        assert np.array_equal(gamma_adjust(img, 1.0), img)

    def test_inverse_of_darkening(self):
        rng = make_rng(69)
        for _ in range(5):
            img = rng.random((20, 20))
            dark = gamma_darken(img, 3.0)
            restored = gamma_adjust(dark, 1.0 / 3.0)
            assert np.max(np.abs(restored - img)) <= 1e-9

    def test_sqrt_of_half(self):
        img = np.array([[1.0, 0.5]])
        out = gamma_adjust(img, 0.5)
        assert out[0, 1] == pytest.approx(np.sqrt(0.5), abs=1e-12)

    def test_nonpositive_gamma_rejected(self):
        with pytest.raises(ValueError):
            gamma_adjust(np.zeros((3, 3)), 0.0)

    def test_brightens_dark_image(self):
        img = gamma_darken(make_rng(70).random((16, 16)), 3.0)
        out = gamma_adjust(img, 0.3)
        assert out.mean() > img.mean()
