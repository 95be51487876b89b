"""Spectral and higher-order statistical analysis of sampled signals.

Welch power spectra, the third-order cumulant, the (squared) bicoherence
with a normalization-masking scheme, the nonlinearity index ``mu``, total
harmonic distortion, and spectral peak extraction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

from .errors import (
    DegenerateNormalization,
    FundamentalNotFound,
    InsufficientCells,
    NonUniformSampling,
    TooShort,
)

MIN_UNMASKED_CELLS = 100
POWER_MASK_REL = 1e-7
DEFAULT_SURROGATES = 19


def _check_grid(t):
    t = np.asarray(t, float)
    if len(t) < 2:
        raise TooShort("need at least two samples")
    dt = np.diff(t)
    dt0 = (t[-1] - t[0]) / (len(t) - 1)
    if dt0 <= 0 or np.max(np.abs(dt - dt0)) > 1e-6 * dt0 + 1e-15:
        raise NonUniformSampling("time grid is not uniform")
    return 1.0 / dt0


@dataclass(frozen=True)
class SpectrumEstimate:
    f: np.ndarray
    pxx: np.ndarray
    fs: float
    nperseg: int
    n_segments: int

    def band(self, f_lo: float, f_hi: float) -> "SpectrumEstimate":
        m = (self.f >= f_lo) & (self.f <= f_hi)
        return SpectrumEstimate(self.f[m], self.pxx[m], self.fs,
                                self.nperseg, self.n_segments)


@dataclass(frozen=True)
class BicoherenceMap:
    """Squared-bicoherence estimate on the principal bifrequency domain.

    ``bic`` holds the squared bicoherence; cells with too little power to
    normalize reliably are masked (``mask`` False) and set to NaN.
    """

    f1: np.ndarray
    f2: np.ndarray
    bic: np.ndarray
    mask: np.ndarray
    n_segments: int
    fs: float

    def to_csv(self, path) -> None:
        import pandas as pd

        n1, n2 = self.bic.shape
        i2, i1 = np.meshgrid(np.arange(n2), np.arange(n1))
        valid = self.mask & np.isfinite(self.bic)
        pd.DataFrame({
            "f1": self.f1[i1[valid]],
            "f2": self.f2[i2[valid]],
            "bic": self.bic[valid],
        }).to_csv(path, index=False, float_format="%.9f")


def psd_estimate(t, x, nperseg: int = 4096, overlap: float = 0.5,
                 detrend: str = "constant") -> SpectrumEstimate:
    """Welch PSD with a Hann window."""
    fs = _check_grid(t)
    x = np.asarray(x, float)
    nperseg = min(int(nperseg), len(x))
    if nperseg < 8:
        raise TooShort("segment too short for a PSD estimate")
    noverlap = int(nperseg * overlap)
    f, pxx = sps.welch(x, fs=fs, window="hann", nperseg=nperseg,
                       noverlap=noverlap, detrend=detrend)
    step = nperseg - noverlap
    nseg = max((len(x) - noverlap) // step, 1)
    return SpectrumEstimate(f, pxx, fs, nperseg, nseg)


def cumulant_c3(x, max_lag: int) -> np.ndarray:
    """Third-order cumulant C3(m, n) of a zero-meaned signal for lags
    ``-max_lag..max_lag`` (biased estimator)."""
    x = np.asarray(x, float)
    n = len(x)
    if n < 3 * max_lag + 3:
        raise TooShort("signal too short for the requested lag range")
    x = x - x.mean()
    lags = np.arange(-max_lag, max_lag + 1)
    c3 = np.empty((len(lags), len(lags)))
    for a, m in enumerate(lags):
        for b, k in enumerate(lags):
            lo = max(0, -m, -k)
            hi = min(n, n - m, n - k)
            c3[a, b] = np.dot(x[lo:hi] * x[lo + m:hi + m], x[lo + k:hi + k]) / n
    return c3


def _segments(x, nperseg, step):
    n_seg = (len(x) - nperseg) // step + 1
    if n_seg < 8:
        raise TooShort("need at least 8 segments for bispectral estimates")
    return n_seg


def bicoherence(t, x, nperseg: int = 256, overlap: float = 0.5,
                fmax: float | None = None) -> BicoherenceMap:
    """Direct (FFT-based) squared-bicoherence estimator.

    Hann-windowed overlapping segments; the bispectrum and the segment-
    averaged power spectra are accumulated and combined as
    ``|B|^2 / (P(f1) P(f2) P(f1+f2))``, clipped to [0, 1].  Cells whose
    normalization involves negligible power (below ``POWER_MASK_REL`` of the
    spectral maximum) are masked out: their normalized value is dominated by
    estimator noise rather than signal structure.
    """
    fs = _check_grid(t)
    x = np.asarray(x, float)
    nperseg = int(nperseg)
    step = max(int(nperseg * (1.0 - overlap)), 1)
    n_seg = _segments(x, nperseg, step)
    win = np.hanning(nperseg)
    half = nperseg // 2
    nf = half + 1
    b_acc = np.zeros((nf, nf), complex)
    p_acc = np.zeros(nf)
    for s in range(n_seg):
        seg = x[s * step:s * step + nperseg]
        seg = (seg - seg.mean()) * win
        xf = np.fft.rfft(seg)
        p_acc += np.abs(xf) ** 2
        # outer product X(f1) X(f2); the sum index f1+f2 is folded below
        b_acc += np.outer(xf, xf) * np.conj(_sumfreq(xf, nf))
    p_acc /= n_seg
    b_acc /= n_seg

    k1g, k2g = np.meshgrid(np.arange(nf), np.arange(nf), indexing="ij")
    principal = (k2g >= 1) & (k2g <= k1g) & (k1g + k2g <= half)
    ksum = np.clip(k1g + k2g, 0, nf - 1)
    denom = p_acc[k1g] * p_acc[k2g] * p_acc[ksum]
    pfloor = POWER_MASK_REL * np.max(p_acc)
    powered = (p_acc[k1g] > pfloor) & (p_acc[k2g] > pfloor) & (p_acc[ksum] > pfloor)
    mask = principal & powered
    if fmax is not None:
        fgrid = np.fft.rfftfreq(nperseg, 1.0 / fs)
        mask &= (fgrid[k1g] <= fmax) & (fgrid[k2g] <= fmax)
    if np.max(p_acc) <= 0.0:
        raise DegenerateNormalization("signal has no power")
    bic = np.full((nf, nf), np.nan)
    ok = mask & (denom > 0)
    bic[ok] = np.clip(np.abs(b_acc[ok]) ** 2 / denom[ok], 0.0, 1.0)
    f = np.fft.rfftfreq(nperseg, 1.0 / fs)
    return BicoherenceMap(f, f.copy(), bic, mask & (denom > 0), n_seg, fs)


def _sumfreq(xf, nf):
    """Matrix M[k1, k2] = X(k1 + k2), zero beyond Nyquist."""
    out = np.zeros((nf, nf), complex)
    k1 = np.arange(nf)[:, None]
    k2 = np.arange(nf)[None, :]
    ks = k1 + k2
    inside = ks < nf
    out[inside] = xf[ks[inside]]
    return out


def peak_bicoherence(bmap: BicoherenceMap) -> float:
    """Largest squared-bicoherence value over the unmasked cells."""
    vals = bmap.bic[bmap.mask & np.isfinite(bmap.bic)]
    if len(vals) < MIN_UNMASKED_CELLS:
        raise InsufficientCells(
            f"only {len(vals)} unmasked bicoherence cells (need {MIN_UNMASKED_CELLS})")
    return float(np.max(vals))


def phase_surrogate(x, rng) -> np.ndarray:
    """Fourier phase-randomized surrogate: identical amplitude spectrum,
    independent uniform phases, hence no phase coupling of any order."""
    x = np.asarray(x, float)
    xf = np.fft.rfft(x - np.mean(x))
    ph = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, len(xf)))
    ph[0] = 1.0
    if len(x) % 2 == 0:
        ph[-1] = 1.0  # the Nyquist bin of a real signal must stay real
    return np.fft.irfft(np.abs(xf) * ph, len(x))


def mu_index(t, x, nperseg: int = 256, overlap: float = 0.875,
             n_surrogates: int = DEFAULT_SURROGATES, dither: float = 0.0,
             rng=None) -> float:
    """Surrogate-calibrated nonlinearity index.

    The bicoherence peak of the record is compared against the mean peak of
    ``n_surrogates`` phase-randomized surrogates, which share the signal's
    amplitude spectrum (including finite-record estimator variance and
    window-leakage structure) but carry no phase coupling.  ``mu`` is the
    excess of the signal peak over that null level, clipped at zero.

    Linear mechanisms -- noise, independent tones, a linear resonance, a
    background harmonic series with drifting phases -- score near zero
    because their peak is statistically indistinguishable from their own
    surrogates'.  Segment-to-segment-consistent quadratic phase coupling
    survives in the record but not in the surrogates, producing a large
    positive ``mu``.  A small ``dither`` (noise standard deviation added to
    the record and every surrogate alike) keeps the normalization of
    noise-free records well conditioned.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    t = np.asarray(t, float)
    x = np.asarray(x, float)
    x_ac = x - np.mean(x)

    def jitter(y):
        return y + rng.standard_normal(len(y)) * dither if dither > 0.0 else y

    def peak(y):
        return peak_bicoherence(bicoherence(t, y, nperseg=nperseg, overlap=overlap))

    m0 = peak(jitter(x_ac))
    null = np.mean([peak(jitter(phase_surrogate(x_ac, rng)))
                    for _ in range(n_surrogates)])
    return float(max(0.0, m0 - null))


def thd(t, x, f0: float = 50.0, max_order: int = 25) -> float:
    """Total harmonic distortion relative to the fundamental.

    The signal is detrended, trimmed to an integer number of fundamental
    cycles, and transformed once; the fundamental is the power in the bins
    within one bin of ``f0`` and the distortion is all remaining power up to
    ``max_order * f0`` (inter-harmonics included).
    """
    fs = _check_grid(t)
    x = np.asarray(x, float)
    n_cyc = int(np.floor((len(x) - 1) / fs * f0))
    if n_cyc < 2:
        raise TooShort("need at least two fundamental cycles")
    n = int(round(n_cyc * fs / f0))
    x = x[:n] - np.mean(x[:n])
    xf = np.fft.rfft(x)
    p = np.abs(xf) ** 2
    f = np.fft.rfftfreq(n, 1.0 / fs)
    df = f[1]
    fund = (np.abs(f - f0) <= df * 1.5)
    p_fund = np.sum(p[fund])
    if p_fund <= 100.0 * np.median(p[1:]) * max(np.count_nonzero(fund), 1):
        raise FundamentalNotFound(
            f"no dominant component near {f0} Hz")
    harm = (~fund) & (f > 0) & (f <= max_order * f0 + df)
    return float(np.sqrt(np.sum(p[harm]) / p_fund))


def spectrum_peaks(spec: SpectrumEstimate, n_peaks: int = 5,
                   f_lo: float = 0.0, f_hi: float | None = None,
                   min_rel_height: float = 1e-6):
    """Dominant spectral peaks as ``(frequency, power)`` pairs.

    Local maxima of the PSD within the band, refined by parabolic
    interpolation on log power, sorted by descending power.
    """
    f, p = spec.f, spec.pxx
    if f_hi is None:
        f_hi = f[-1]
    band = (f >= f_lo) & (f <= f_hi)
    idx = np.where(band)[0]
    if len(idx) < 3:
        raise TooShort("band contains too few frequency bins")
    pk, _ = sps.find_peaks(p[idx], height=min_rel_height * np.max(p[idx]))
    out = []
    for j in idx[pk]:
        if 0 < j < len(p) - 1 and p[j - 1] > 0 and p[j + 1] > 0:
            la, lb, lc = np.log(p[j - 1]), np.log(p[j]), np.log(p[j + 1])
            den = la - 2 * lb + lc
            off = 0.5 * (la - lc) / den if den != 0 else 0.0
            off = float(np.clip(off, -0.5, 0.5))
        else:
            off = 0.0
        out.append((float(f[j] + off * (f[1] - f[0])), float(p[j])))
    out.sort(key=lambda fp: -fp[1])
    return out[:n_peaks]


def dominant_frequency(t, x, f_lo: float = 1.0, f_hi: float = 200.0,
                       nperseg: int = 4096) -> tuple[float, float]:
    """Convenience: strongest non-fundamental peak in the band."""
    spec = psd_estimate(t, x, nperseg=nperseg)
    peaks = spectrum_peaks(spec, n_peaks=10, f_lo=f_lo, f_hi=f_hi)
    if not peaks:
        raise FundamentalNotFound("no spectral peak in the requested band")
    return peaks[0]
