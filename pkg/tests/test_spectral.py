"""Unit tests for the spectral/higher-order analysis module."""

import numpy as np
import pytest

from oscilloc import spectral
from oscilloc.errors import (FundamentalNotFound, InsufficientCells,
                             NonUniformSampling, TooShort)

FS = 1000.0


def _t(n, fs=FS):
    return np.arange(n) / fs


class TestPsd:
    def test_parseval(self, rng):
        x = rng.standard_normal(8192)
        spec = spectral.psd_estimate(_t(8192), x, nperseg=1024)
        power = np.trapezoid(spec.pxx, spec.f)
        assert np.isclose(power, np.var(x), rtol=0.1)

    def test_tone_peak_location(self):
        t = _t(4096)
        spec = spectral.psd_estimate(t, np.sin(2 * np.pi * 123.0 * t),
                                     nperseg=1024)
        assert abs(spec.f[np.argmax(spec.pxx)] - 123.0) < 1.0

    def test_band_selection(self):
        t = _t(4096)
        spec = spectral.psd_estimate(t, np.sin(2 * np.pi * 123.0 * t))
        sub = spec.band(100.0, 150.0)
        assert sub.f.min() >= 100.0 and sub.f.max() <= 150.0

    def test_nonuniform_grid_rejected(self, rng):
        t = _t(2048).copy()
        t[100] += 1e-3
        with pytest.raises(NonUniformSampling):
            spectral.psd_estimate(t, rng.standard_normal(2048))


class TestCumulantC3:
    def test_zero_mean_gaussian_is_small(self, rng):
        x = rng.standard_normal(200000)
        c3 = spectral.cumulant_c3(x, max_lag=4)
        assert np.max(np.abs(c3)) < 0.02

    def test_skewed_signal_has_nonzero_origin(self, rng):
        x = rng.standard_normal(50000) ** 2
        c3 = spectral.cumulant_c3(x, max_lag=2)
        mid = c3.shape[0] // 2
        assert c3[mid, mid] > 1.0

    def test_symmetry(self, rng):
        x = rng.standard_normal(10000) ** 3
        c3 = spectral.cumulant_c3(x, max_lag=3)
        assert np.allclose(c3, c3.T, atol=1e-12)


class TestBicoherence:
    def test_coupled_triple_peaks_near_one(self, rng):
        t = _t(8000)
        p1 = rng.uniform(0, 2 * np.pi, 8000).cumsum() * 0.0  # fixed phases
        f1, f2 = 60.0, 110.0
        ph1, ph2 = rng.uniform(0, 2 * np.pi, 2)
        x = (np.cos(2 * np.pi * f1 * t + ph1)
             + np.cos(2 * np.pi * f2 * t + ph2)
             + 0.5 * np.cos(2 * np.pi * (f1 + f2) * t + ph1 + ph2)
             + 0.1 * rng.standard_normal(8000))
        bmap = spectral.bicoherence(t, x, nperseg=256, overlap=0.5)
        i1 = np.argmin(np.abs(bmap.f1 - f1))
        i2 = np.argmin(np.abs(bmap.f2 - f2))
        cell = max(bmap.bic[i2, i1], bmap.bic[i1, i2])
        assert cell > 0.8

    def test_independent_phases_stay_low_at_cell(self, rng):
        t = _t(8000)
        f1, f2 = 60.0, 110.0
        # phase of the sum tone re-drawn per segment-length block
        ph3 = np.repeat(rng.uniform(0, 2 * np.pi, 8000 // 64), 64)
        x = (np.cos(2 * np.pi * f1 * t)
             + np.cos(2 * np.pi * f2 * t)
             + 0.5 * np.cos(2 * np.pi * (f1 + f2) * t + ph3)
             + 0.1 * rng.standard_normal(8000))
        bmap = spectral.bicoherence(t, x, nperseg=256, overlap=0.5)
        i1 = np.argmin(np.abs(bmap.f1 - f1))
        i2 = np.argmin(np.abs(bmap.f2 - f2))
        assert bmap.bic[i2, i1] < 0.6

    def test_values_within_unit_interval(self, rng):
        t = _t(4000)
        bmap = spectral.bicoherence(t, rng.standard_normal(4000), nperseg=256)
        vals = bmap.bic[np.isfinite(bmap.bic)]
        assert np.all(vals >= 0.0) and np.all(vals <= 1.0)

    def test_too_short_record_rejected(self, rng):
        t = _t(600)
        with pytest.raises(TooShort):
            spectral.bicoherence(t, rng.standard_normal(600), nperseg=256,
                                 overlap=0.0)

    def test_csv_export(self, tmp_path, rng):
        t = _t(4000)
        bmap = spectral.bicoherence(t, rng.standard_normal(4000), nperseg=256)
        path = tmp_path / "bic.csv"
        bmap.to_csv(path)
        header = path.read_text().splitlines()[0]
        assert header.split(",")[:3] == ["f1", "f2", "bic"]


class TestSurrogates:
    def test_amplitude_spectrum_preserved(self, rng):
        x = rng.standard_normal(4096)
        s = spectral.phase_surrogate(x, rng)
        a0 = np.abs(np.fft.rfft(x - x.mean()))
        a1 = np.abs(np.fft.rfft(s))
        assert np.allclose(a0[1:], a1[1:], rtol=1e-9)


class TestMuIndex:
    def test_coupled_triple_scores_high(self, rng):
        t = _t(4000)
        f1, f2 = 21.0, 34.0
        p1 = rng.uniform(0, 2 * np.pi) + np.cumsum(rng.standard_normal(4000)) * 0.12
        p2 = rng.uniform(0, 2 * np.pi) + np.cumsum(rng.standard_normal(4000)) * 0.12
        x = (np.cos(2 * np.pi * f1 * t + p1) + np.cos(2 * np.pi * f2 * t + p2)
             + 0.6 * np.cos(2 * np.pi * (f1 + f2) * t + p1 + p2)
             + 0.3 * rng.standard_normal(4000))
        assert spectral.mu_index(t, x, rng=rng) > 0.10

    def test_noise_scores_low(self, rng):
        t = _t(4000)
        assert spectral.mu_index(t, rng.standard_normal(4000), rng=rng) < 0.10

    def test_two_independent_tones_score_low(self, rng):
        t = _t(4000)
        x = (0.085 * np.cos(2 * np.pi * 50.0 * t + 0.2)
             + 0.16 * np.cos(2 * np.pi * 304.0 * t + 1.0))
        mu = spectral.mu_index(t, x, dither=np.std(x) * 1e-2, rng=rng)
        assert mu < 0.10

    def test_deterministic_given_seed(self):
        t = _t(4000)
        rng = np.random.default_rng(7)
        x = np.cos(2 * np.pi * 60.0 * t) + 0.1 * rng.standard_normal(4000)
        a = spectral.mu_index(t, x, rng=np.random.default_rng(42))
        b = spectral.mu_index(t, x, rng=np.random.default_rng(42))
        assert a == b


class TestThd:
    def test_pure_fundamental_is_zero(self):
        t = _t(4000)
        assert spectral.thd(t, np.sin(2 * np.pi * 50.0 * t)) < 1e-6

    def test_known_ratio(self):
        t = _t(4000)
        x = np.sin(2 * np.pi * 50.0 * t) + 0.1 * np.sin(2 * np.pi * 150.0 * t)
        assert np.isclose(spectral.thd(t, x), 0.1, rtol=1e-3)

    def test_interharmonics_counted(self):
        t = _t(4000)
        x = np.sin(2 * np.pi * 50.0 * t) + 0.2 * np.sin(2 * np.pi * 83.0 * t)
        assert spectral.thd(t, x) > 0.15

    def test_missing_fundamental_raises(self, rng):
        t = _t(4000)
        with pytest.raises(FundamentalNotFound):
            spectral.thd(t, np.sin(2 * np.pi * 380.0 * t))

    def test_too_short_raises(self):
        t = _t(30)
        with pytest.raises(TooShort):
            spectral.thd(t, np.ones(30))


class TestPeaks:
    def test_parabolic_interpolation_accuracy(self):
        t = _t(32768)
        f_true = 77.37  # deliberately off-bin
        spec = spectral.psd_estimate(t, np.sin(2 * np.pi * f_true * t),
                                     nperseg=4096)
        peaks = spectral.spectrum_peaks(spec, n_peaks=1, f_lo=10, f_hi=200)
        assert abs(peaks[0][0] - f_true) < 0.05

    def test_dominant_frequency(self):
        t = _t(8192)
        x = (0.2 * np.sin(2 * np.pi * 33.0 * t)
             + 0.05 * np.sin(2 * np.pi * 90.0 * t))
        f, _p = spectral.dominant_frequency(t, x, 5.0, 200.0, nperseg=4096)
        assert abs(f - 33.0) < 0.5
