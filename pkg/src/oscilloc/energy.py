"""Energy functionals computed from instantaneous waveforms.

Main-circuit Hamiltonian H, the energy function V, the AC-side transient
energy flow TEF_ac, its oscillatory accumulation delta-ESP_ac, the
control-loop storage functions H_VL/H_CL, and the comparison metric W_TEF.
All functions are pure trace-in/trace-out.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import MismatchedGrid
from .traces import EnergyTrace
from .vsc_control import fd_derivative

DEFAULT_ESP_WINDOW = 0.02  # one 50 Hz fundamental period


def _grid(t) -> float:
    t = np.asarray(t, float)
    if len(t) < 2:
        raise MismatchedGrid("trace too short for a sampling grid")
    return (t[-1] - t[0]) / (len(t) - 1)


def _cumint(y, dt):
    return cumulative_trapezoid(y, dx=dt, initial=0.0)


def sliding_mean(y, n_half: int):
    """Centered sliding mean with shrinking windows at the edges."""
    y = np.asarray(y, float)
    n = len(y)
    cs = np.concatenate(([0.0], np.cumsum(y)))
    idx = np.arange(n)
    lo = np.maximum(idx - n_half, 0)
    hi = np.minimum(idx + n_half + 1, n)
    return (cs[hi] - cs[lo]) / (hi - lo)


def hamiltonian_main(x1, x2, x3, x4, l_ac: float, c_dc: float) -> np.ndarray:
    """Main-circuit Hamiltonian: quadratic storage in the phase inductors
    and the DC capacitor, evaluated pointwise on flux/charge states."""
    x1, x2, x3, x4 = (np.asarray(v, float) for v in (x1, x2, x3, x4))
    return (x1 ** 2 + x2 ** 2 + x3 ** 2) / (2.0 * l_ac) + x4 ** 2 / (2.0 * c_dc)


def instantaneous_power(v_abc: np.ndarray, i_abc: np.ndarray) -> np.ndarray:
    """p_ac = v_a i_a + v_b i_b + v_c i_c."""
    return np.einsum("ij,ij->i", np.asarray(v_abc, float), np.asarray(i_abc, float))


def tef_ac(t, v_abc, i_abc, label="TEF_ac", node="") -> EnergyTrace:
    """Cumulative AC-side transient energy flow (trapezoidal)."""
    t = np.asarray(t, float)
    v_abc = np.asarray(v_abc, float)
    i_abc = np.asarray(i_abc, float)
    if v_abc.shape != i_abc.shape or v_abc.shape[0] != len(t):
        raise MismatchedGrid("voltage/current traces are not aligned")
    dt = _grid(t)
    return EnergyTrace(t, _cumint(instantaneous_power(v_abc, i_abc), dt), label, node)


def delta_esp_ac(t, v_abc, i_abc, window: float = DEFAULT_ESP_WINDOW,
                 label="dESP_ac", node="") -> EnergyTrace:
    """Accumulated oscillatory part of p_ac.

    The mean power estimate is a centered sliding mean of width ``window``
    (shrinking at the edges); the returned trace is the cumulative integral
    of ``p_ac - p_mean``.
    """
    if window <= 0:
        raise ValueError("window must be > 0")
    t = np.asarray(t, float)
    v_abc = np.asarray(v_abc, float)
    i_abc = np.asarray(i_abc, float)
    if v_abc.shape != i_abc.shape or v_abc.shape[0] != len(t):
        raise MismatchedGrid("voltage/current traces are not aligned")
    dt = _grid(t)
    p = instantaneous_power(v_abc, i_abc)
    n_half = max(int(round(window / dt / 2.0)), 1)
    pbar = sliding_mean(p, n_half)
    return EnergyTrace(t, _cumint(p - pbar, dt), label, node)


def band_energy(t, v_abc, i_abc, bands, label="E_band", node="") -> EnergyTrace:
    """Cumulative energy carried by selected frequency bands of the port.

    Both waveform blocks are filtered with an ideal (FFT-mask) band-pass
    keeping only ``bands`` (list of ``(f_lo, f_hi)`` in Hz); the trace is the
    cumulative integral of the filtered instantaneous power.  Because every
    retained component is orthogonal to the removed ones, the mean of the
    filtered power is exactly the net power exchanged in those bands.
    """
    t = np.asarray(t, float)
    v_abc = np.asarray(v_abc, float)
    i_abc = np.asarray(i_abc, float)
    if v_abc.shape != i_abc.shape or v_abc.shape[0] != len(t):
        raise MismatchedGrid("voltage/current traces are not aligned")
    dt = _grid(t)
    n = len(t)
    f = np.fft.rfftfreq(n, dt)
    mask = np.zeros(len(f))
    for lo, hi in bands:
        mask[(f >= lo) & (f <= hi)] = 1.0
    p = np.zeros(n)
    for k in range(v_abc.shape[1]):
        vf = np.fft.irfft(np.fft.rfft(v_abc[:, k]) * mask, n)
        if_ = np.fft.irfft(np.fft.rfft(i_abc[:, k]) * mask, n)
        p += vf * if_
    return EnergyTrace(t, _cumint(p, dt), label, node)


def energy_function_v(t, x1, x2, x3, x4, v_abc, i_abc, i_dc,
                      l_ac: float, c_dc: float, label="V", node="") -> EnergyTrace:
    """Energy function: storage plus the cumulative port integral
    of ``p_ac - v_dc i_dc``."""
    t = np.asarray(t, float)
    dt = _grid(t)
    h = hamiltonian_main(x1, x2, x3, x4, l_ac, c_dc)
    v_dc = np.asarray(x4, float) / c_dc
    port = instantaneous_power(v_abc, i_abc) - v_dc * np.asarray(i_dc, float)
    return EnergyTrace(t, h + _cumint(port, dt), label, node)


def eq14_residual(t, x1, x2, x3, x4, v_abc, i_abc, i_dc,
                  l_ac: float, c_dc: float, r_ac: float) -> float:
    """Relative residual of the dissipation balance of the energy function:
    V(t) - V(0) + integral of R_ac (i_a^2+i_b^2+i_c^2) = 0.

    Evaluated in integral form: the storage terms are exact functions of the
    recorded states, so the residual reflects only quadrature error on the
    port/dissipation integrals and the solver's state error -- both shrink
    with the step size.  Normalized by the larger of the total dissipated
    energy and the energy-function excursion.
    """
    t = np.asarray(t, float)
    dt = _grid(t)
    tr = energy_function_v(t, x1, x2, x3, x4, v_abc, i_abc, i_dc, l_ac, c_dc)
    i_abc = np.asarray(i_abc, float)
    dissipated = _cumint(r_ac * np.einsum("ij,ij->i", i_abc, i_abc), dt)
    num = np.abs(tr.value - tr.value[0] + dissipated)
    scale = max(np.max(dissipated), np.max(np.abs(tr.value - tr.value[0])), 1e-12)
    return float(np.max(num) / scale)


def eq10_residual(t, x1, x2, x3, x4, v_abc, i_abc, i_dc,
                  l_ac: float, c_dc: float, r_ac: float) -> float:
    """Relative residual of the PCH power balance dH/dt = u^T y - dissipation.

    With u = [v_abc, i_dc] and the port map of the main circuit this is
    dH/dt = -p_ac + v_dc i_dc - R_ac sum(i^2).  Evaluated in integral form:
    H(t) - H(0) is exact in the recorded states and the right-hand side is
    integrated by trapezoid, so the residual shrinks with the step size.
    Normalized by the larger excursion of the two sides.
    """
    t = np.asarray(t, float)
    dt = _grid(t)
    h = hamiltonian_main(x1, x2, x3, x4, l_ac, c_dc)
    i_abc = np.asarray(i_abc, float)
    v_dc = np.asarray(x4, float) / c_dc
    uy = -instantaneous_power(v_abc, i_abc) + v_dc * np.asarray(i_dc, float)
    rhs = _cumint(uy - r_ac * np.einsum("ij,ij->i", i_abc, i_abc), dt)
    lhs = h - h[0]
    num = np.abs(lhs - rhs)
    scale = max(np.max(np.abs(lhs)), np.max(np.abs(rhs)), 1e-12)
    return float(np.max(num) / scale)


def hamiltonian_control(t, x5, x6, x7, x8, k_ivd: float, k_ivq: float,
                        k_ii: float, node="") -> dict:
    """Pointwise control-loop storage functions.

    Returns a dict of EnergyTraces ``H_VL``, ``H_CL`` and ``sum``.  The
    integrator inputs may be simulated states or reconstructions obtained by
    integrating measured reference errors from the analysis start (only
    growth trends are used downstream, so the absolute offset is irrelevant).
    """
    t = np.asarray(t, float)
    x5, x6, x7, x8 = (np.asarray(v, float) for v in (x5, x6, x7, x8))
    h_vl = 0.5 * (k_ivd * x5 ** 2 + k_ivq * x6 ** 2)
    h_cl = 0.5 * k_ii * (x7 ** 2 + x8 ** 2)
    return {
        "H_VL": EnergyTrace(t, h_vl, "H_VL", node),
        "H_CL": EnergyTrace(t, h_cl, "H_CL", node),
        "sum": EnergyTrace(t, h_vl + h_cl, "H_VL+H_CL", node),
    }


def reconstruct_integrators(t, errors, t_start: float = 0.0):
    """Integrate reference-minus-feedback errors from ``t_start`` onward."""
    t = np.asarray(t, float)
    dt = _grid(t)
    out = []
    gate = (t >= t_start).astype(float)
    for e in errors:
        out.append(_cumint(np.asarray(e, float) * gate, dt))
    return out


def w_tef(t, v_xy, i_xy, label="W_TEF", node="") -> EnergyTrace:
    """Comparison metric: cumulative integral of i_x dv_y - i_y dv_x."""
    t = np.asarray(t, float)
    v_xy = np.asarray(v_xy, float)
    i_xy = np.asarray(i_xy, float)
    if v_xy.shape != i_xy.shape or v_xy.shape[0] != len(t):
        raise MismatchedGrid("voltage/current traces are not aligned")
    dt = _grid(t)
    dvx = fd_derivative(v_xy[:, 0], dt)
    dvy = fd_derivative(v_xy[:, 1], dt)
    integrand = i_xy[:, 0] * dvy - i_xy[:, 1] * dvx
    return EnergyTrace(t, _cumint(integrand, dt), label, node)


def trend_increasing(t, y, window: float | None = None, floor: float = 0.0,
                     sigma_ratio: float = 3.0) -> bool:
    """Operational test for "increases continuously".

    Least-squares slope over the trailing ``window`` seconds (whole trace if
    None); declared increasing when the slope is positive, the implied rise
    exceeds both ``sigma_ratio`` times the detrended residual RMS and the
    absolute ``floor``.
    """
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    if window is not None:
        m = t >= t[-1] - window
        t, y = t[m], y[m]
    if len(t) < 8:
        return False
    tt = t - t.mean()
    denom = np.dot(tt, tt)
    if denom == 0.0:
        return False
    slope = np.dot(tt, y - y.mean()) / denom
    rise = slope * (t[-1] - t[0])
    resid = y - y.mean() - slope * tt
    noise = float(np.sqrt(np.mean(resid ** 2)))
    return bool(slope > 0 and rise > sigma_ratio * noise and rise > floor)


def trend_slope(t, y, window: float | None = None) -> float:
    """Least-squares slope over the trailing window (diagnostic value)."""
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    if window is not None:
        m = t >= t[-1] - window
        t, y = t[m], y[m]
    if len(t) < 2:
        return 0.0
    tt = t - t.mean()
    denom = np.dot(tt, tt)
    return float(np.dot(tt, y - y.mean()) / denom) if denom else 0.0
