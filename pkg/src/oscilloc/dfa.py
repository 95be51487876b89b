"""Describing-function analysis of the saturated converter control loop.

Single-loop quasi-linear model: DC-voltage PI (G1), washed-out current PI
(G2), modulation gain with an inertia lag (P), and the LC output stage
(G3), closed through one of three amplitude limiters.  The harmonic balance
``N(A) H(j w) = -1`` is solved for limit-cycle candidates, each candidate is
classified stable/unstable, and a matching time-domain integrator of the
same loop is provided for cross-validation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    NoAmplitudeSolution,
    NonPositiveAmplitude,
    NoPhaseCrossing,
)

OMEGA_B = 2.0 * np.pi * 50.0

LIMITERS = ("vloop", "cloop", "pwm")


@dataclass(frozen=True)
class LoopModel:
    """Parameters of the single-loop quasi-linear control model.

    Gains are per-unit; the integral gains are scaled by the base angular
    frequency internally (the loop model is written against SI time).
    ``l``, ``r``, ``c`` are the SI filter inductance, resistance and DC
    capacitance of the output stage.
    """

    k_pvd: float = 2.5
    k_ivd: float = 1000.0
    k_pi: float = 50.0
    k_ii: float = 6250.0
    k_pwm: float = 0.353
    tau1: float = 5e-5
    tau2: float = 3e-4
    l: float = 0.03911
    r: float = 1.224
    c: float = 300e-6
    v_d: float = float(np.sqrt(1.5))
    v_dc: float = 1.95

    def __post_init__(self):
        for name in ("k_pvd", "k_ivd", "k_pi", "k_ii", "k_pwm",
                     "tau1", "tau2", "l", "r", "c", "v_d", "v_dc"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")

    @property
    def k_mod(self) -> float:
        return 1.5 * self.v_d / self.v_dc

    # individual blocks ---------------------------------------------------
    def g1(self, s):
        return self.k_pvd + self.k_ivd * OMEGA_B / s

    def g2(self, s):
        washout = 1.0 - 1.0 / (self.tau2 * s + 1.0)
        return washout * (self.k_pi + self.k_ii * OMEGA_B / s)

    def pwm(self, s):
        return self.k_pwm / (self.tau1 * s + 1.0)

    def g3(self, s):
        k = self.k_mod
        return k / (1.5 * self.l * self.c * s ** 2 + 1.5 * self.r * self.c * s + k ** 2)


def saturation_df(a: float, delta: float) -> float:
    """Describing function of a symmetric saturation with limit ``delta``."""
    if delta <= 0:
        raise ValueError("delta must be > 0")
    if a <= 0:
        raise NonPositiveAmplitude(f"amplitude must be > 0, got {a}")
    if a <= delta:
        return 1.0
    r = delta / a
    return (2.0 / np.pi) * (np.arcsin(r) + r * np.sqrt(1.0 - r * r))


def loop_response(model: LoopModel, s, limiter: str = "pwm"):
    """Linear open-loop response around the limiter (limiter gain excluded).

    The loop is a single series connection, so the product is the same for
    every limiter position; ``limiter`` is validated for interface
    consistency with the amplitude solver.
    """
    if limiter not in LIMITERS:
        raise ValueError(f"unknown limiter {limiter!r}; expected one of {LIMITERS}")
    s = np.asarray(s, complex)
    return model.g1(s) * model.g2(s) * model.pwm(s) * model.g3(s)


def bode_data(model: LoopModel, f_hz=None, limiter: str = "pwm") -> np.ndarray:
    """Open-loop Bode samples: columns ``f_hz, mag_db, phase_rad``.

    Phase is unwrapped along the frequency axis.
    """
    if f_hz is None:
        f_hz = np.logspace(0, np.log10(200.0), 400)
    f_hz = np.asarray(f_hz, float)
    h = loop_response(model, 1j * 2.0 * np.pi * f_hz, limiter)
    return np.column_stack([f_hz, 20.0 * np.log10(np.abs(h)),
                            np.unwrap(np.angle(h))])


def write_bode_csv(path, model: LoopModel, f_hz=None, limiter: str = "pwm") -> None:
    import pandas as pd

    data = bode_data(model, f_hz, limiter)
    pd.DataFrame(data, columns=["f_hz", "mag_db", "phase_rad"]).to_csv(
        path, index=False, float_format="%.9f")


@dataclass(frozen=True)
class HarmonicBalanceSolution:
    f_hz: float
    amplitude: float
    n_value: float
    stable: bool
    limiter: str
    delta: float


def _phase_plus_pi(model, limiter, f):
    h = loop_response(model, 1j * 2.0 * np.pi * f, limiter)
    # wrapped to (-pi, pi]; the balance requires arg(H) = -pi (mod 2 pi)
    return float(np.angle(-complex(h)))


def _find_phase_crossings(model, limiter, band, n_scan=4000, tol=1e-6):
    f_lo, f_hi = band
    fs = np.linspace(f_lo, f_hi, n_scan)
    ph = np.array([_phase_plus_pi(model, limiter, f) for f in fs])
    roots = []
    for i in range(len(fs) - 1):
        a, b = ph[i], ph[i + 1]
        if a == 0.0:
            roots.append(fs[i])
            continue
        if a * b < 0 and abs(a - b) < np.pi:  # skip wrap discontinuities
            lo, hi, plo = fs[i], fs[i + 1], a
            while hi - lo > tol:
                mid = 0.5 * (lo + hi)
                pm = _phase_plus_pi(model, limiter, mid)
                if plo * pm <= 0:
                    hi = mid
                else:
                    lo, plo = mid, pm
            roots.append(0.5 * (lo + hi))
    return roots


def _amplitude_for(model, limiter, delta, f):
    """Solve N(A) |H| = 1 at the phase-crossing frequency ``f``."""
    gain = abs(complex(loop_response(model, 1j * 2.0 * np.pi * f, limiter)))
    n_req = 1.0 / gain
    if n_req >= 1.0:
        raise NoAmplitudeSolution(
            f"loop gain {gain:.4g} at {f:.3f} Hz is below unity; the limiter "
            "cannot balance it")
    # N is 1 on (0, delta] and strictly decreasing beyond; bracket and bisect
    lo, hi = delta, 2.0 * delta
    while saturation_df(hi, delta) > n_req:
        hi *= 2.0
        if hi > 1e15 * delta:
            raise NoAmplitudeSolution("required describing-function value too small")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if saturation_df(mid, delta) > n_req:
            lo = mid
        else:
            hi = mid
        if (hi - lo) <= 1e-12 * hi:
            break
    a = 0.5 * (lo + hi)
    return a, n_req


def stability_check(model: LoopModel, f_hz: float, limiter: str = "pwm",
                    rel_step: float = 1e-4) -> bool:
    """Limit-cycle stability from the local shape of the loop response.

    At a balanced crossing, an amplitude perturbation shifts the operating
    point along the describing-function locus; the cycle is stable when
    increasing amplitude moves the loop out of the encirclement region.
    For a saturation (whose inverse-negative locus runs down the negative
    real axis), this reduces to the slope test: log-magnitude increasing
    with phase at the crossing implies a stable cycle.
    """
    df = max(f_hz * rel_step, 1e-9)
    h_m = complex(loop_response(model, 1j * 2.0 * np.pi * (f_hz - df), limiter))
    h_p = complex(loop_response(model, 1j * 2.0 * np.pi * (f_hz + df), limiter))
    dlm = np.log(abs(h_p)) - np.log(abs(h_m))
    dph = np.angle(h_p / h_m)
    if dph == 0.0:
        return False
    return bool(dlm / dph > 0.0)


def solve_harmonic_balance(model: LoopModel, limiter: str = "pwm",
                           delta: float = 1.0,
                           band: tuple[float, float] = (1.0, 200.0),
                           ) -> list[HarmonicBalanceSolution]:
    """All limit-cycle candidates in the band, sorted by frequency.

    Raises NoPhaseCrossing when the loop phase never reaches the balance
    condition inside the band.
    """
    if limiter not in LIMITERS:
        raise ValueError(f"unknown limiter {limiter!r}; expected one of {LIMITERS}")
    roots = _find_phase_crossings(model, limiter, band)
    if not roots:
        raise NoPhaseCrossing(
            f"no phase crossing of the loop response in {band[0]}-{band[1]} Hz")
    sols = []
    for f in roots:
        try:
            a, n_req = _amplitude_for(model, limiter, delta, f)
        except NoAmplitudeSolution:
            continue
        sols.append(HarmonicBalanceSolution(
            f_hz=float(f), amplitude=float(a), n_value=float(n_req),
            stable=stability_check(model, f, limiter), limiter=limiter,
            delta=float(delta)))
    if not sols:
        raise NoAmplitudeSolution(
            "phase crossings exist but none admits a limiter amplitude")
    return sols


def simulate_loop(model: LoopModel, delta: float = 1.0, t_end: float = 6.0,
                  dt: float = 2e-6, y0: float = 1e-3, keep_last: float = 1.0):
    """Time-domain integration of the same loop with the modulation limiter.

    Returns ``(t, y, u_lim_in)`` for the trailing ``keep_last`` seconds:
    the plant output and the limiter-input signal (whose swing is the
    amplitude the harmonic balance predicts).  Used to cross-validate the
    describing-function solution.
    """
    kernel = _loop_kernel()
    n = int(round(t_end / dt))
    keep = min(int(round(keep_last / dt)), n)
    y, ulim = kernel(
        n, keep, dt, delta, y0,
        model.k_pvd, model.k_ivd * OMEGA_B, model.k_pi, model.k_ii * OMEGA_B,
        model.k_pwm, model.tau1, model.tau2, model.l, model.r, model.c,
        model.k_mod)
    t = (np.arange(n - keep, n) + 1) * dt
    return t, y, ulim


_LOOP_KERNEL = None


def _loop_kernel():
    global _LOOP_KERNEL
    if _LOOP_KERNEL is None:
        from numba import njit

        @njit(cache=True)
        def kernel(n, keep, dt, delta, y0, kpvd, kivd, kpi, kii, kpwm,
                   tau1, tau2, l, r, c, k):
            a_ = 1.5 * l * c
            b_ = 1.5 * r * c
            x = np.zeros(6)
            x[4] = y0
            y = np.empty(keep)
            ulim = np.empty(keep)
            d1 = np.empty(6)
            d2 = np.empty(6)
            d3 = np.empty(6)
            d4 = np.empty(6)
            xs = np.empty(6)

            def deriv(x, d):
                e = -x[4]
                u1 = kpvd * e + kivd * x[0]
                u2pi = kpi * u1 + kii * x[1]
                w = u2pi - x[2]
                u3 = min(max(x[3], -delta), delta)
                d[0] = e
                d[1] = u1
                d[2] = (u2pi - x[2]) / tau2
                d[3] = (kpwm * w - x[3]) / tau1
                d[4] = x[5]
                d[5] = (k * u3 - b_ * x[5] - k * k * x[4]) / a_

            for i in range(n):
                deriv(x, d1)
                for j in range(6):
                    xs[j] = x[j] + 0.5 * dt * d1[j]
                deriv(xs, d2)
                for j in range(6):
                    xs[j] = x[j] + 0.5 * dt * d2[j]
                deriv(xs, d3)
                for j in range(6):
                    xs[j] = x[j] + dt * d3[j]
                deriv(xs, d4)
                for j in range(6):
                    x[j] = x[j] + (dt / 6.0) * (d1[j] + 2 * d2[j] + 2 * d3[j] + d4[j])
                if i >= n - keep:
                    y[i - (n - keep)] = x[4]
                    ulim[i - (n - keep)] = x[3]
            return y, ulim

        _LOOP_KERNEL = kernel
    return _LOOP_KERNEL
