"""Fixed-step time-domain simulation of small AC networks with averaged VSCs.

The network (shunt-capacitor buses, RL branches, Thevenin sources, SVC
capacitor banks, constant injections) and all VSC device states form one
combined ODE system integrated with explicit RK4 at a fixed step.  Events
swap device parameters between integration segments.  Recorded states are
post-processed into a :class:`~oscilloc.traces.SignalTrace` including
reconstructed controller references and limiter-activity flags.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalDivergence
from .scenario import NetworkScenario, SvcDevice, VscDevice
from .traces import SignalTrace
from .vsc_control import fd_derivative, reconstruct_control_signals

VSC_STATE_NAMES = ["ia", "ib", "ic", "vdc", "x5", "x6", "x7", "x8",
                   "theta_pll", "pll_xi", "vm_filt", "epd", "epq"]
VSC_DERIVED_NAMES = ["vd", "vq", "id", "iq", "id_ref", "iq_ref",
                     "ed_ref", "eq_ref", "sat_vd", "sat_vq", "sat_cl", "sat_pwm"]
#: DC chopper engages above this multiple of the DC voltage reference
CHOPPER_RATIO = 3.0


@dataclass(frozen=True)
class MainCircuitParams:
    """Main-circuit constants of one VSC (SI units)."""

    r_ac: float  # ohm
    l_ac: float  # henry
    c_dc: float  # farad

    def __post_init__(self):
        if self.r_ac < 0 or self.l_ac <= 0 or self.c_dc <= 0:
            raise ValueError("require r_ac >= 0, l_ac > 0, c_dc > 0")


@dataclass
class MainCircuitState:
    """Flux/charge states x1..x4 of the VSC main circuit."""

    x1: float
    x2: float
    x3: float
    x4: float

    @classmethod
    def from_physical(cls, i_abc, v_dc, params: MainCircuitParams):
        return cls(params.l_ac * i_abc[0], params.l_ac * i_abc[1],
                   params.l_ac * i_abc[2], params.c_dc * v_dc)

    def currents(self, params: MainCircuitParams):
        return (self.x1 / params.l_ac, self.x2 / params.l_ac, self.x3 / params.l_ac)

    def v_dc(self, params: MainCircuitParams):
        return self.x4 / params.c_dc


@dataclass(frozen=True)
class PortInputs:
    """Port quantities of the VSC main circuit."""

    v_abc: tuple[float, float, float]
    i_dc: float
    t_abc: tuple[float, float, float]  # zero-sum modulation functions

    def __post_init__(self):
        if abs(sum(self.t_abc)) > 1e-9 * (1.0 + max(abs(x) for x in self.t_abc)):
            raise ValueError("modulation functions must sum to zero")


def main_circuit_derivatives(state: MainCircuitState, ports: PortInputs,
                             params: MainCircuitParams) -> np.ndarray:
    """State derivatives [dx1..dx4] of the VSC main circuit.

    Phase equations: dx_j = e_j - v_j - R_ac i_j with e_j = T_j v_dc;
    DC equation: dx4 = -sum(T_j i_j) + i_dc.
    """
    i = state.currents(params)
    v_dc = state.v_dc(params)
    d = np.empty(4)
    for j in range(3):
        d[j] = ports.t_abc[j] * v_dc - ports.v_abc[j] - params.r_ac * i[j]
    d[3] = -(ports.t_abc[0] * i[0] + ports.t_abc[1] * i[1] + ports.t_abc[2] * i[2]) + ports.i_dc
    return d


class Simulator:
    """Stateful fixed-step integrator for one scenario."""

    def __init__(self, scenario: NetworkScenario):
        scenario.validate()
        self.scenario = scenario
        self.t = 0.0
        self._arrays = _build_arrays(scenario.with_events_applied(0.0)
                                     if any(e.t == 0.0 for e in scenario.events)
                                     else scenario)
        self.x = _initial_state(scenario, self._arrays)
        self._step_index = 0

    def step(self, dt: float | None = None) -> None:
        """Advance all device states by one RK4 step (deterministic)."""
        from . import _kernel as K

        dt = self.scenario.sim.dt if dt is None else dt
        if dt <= 0:
            raise ValueError("dt must be > 0")
        rec = np.empty((1, self.x.shape[0] + 1))
        x, _, tdiv = K.run(self.x, self.t, self.t + dt, dt, *self._arrays,
                           1, rec, self.scenario.sim.state_ceiling)
        if tdiv >= 0.0:
            raise NumericalDivergence(f"state magnitude ceiling exceeded at t={tdiv:.6f} s",
                                      t=tdiv)
        self.x = x
        self.t += dt
        self._step_index += 1


def run_scenario(scenario: NetworkScenario) -> SignalTrace:
    """Simulate the scenario and return the recorded multi-channel trace.

    Channels cover per-bus voltages, branch/source currents, per-VSC states
    plus reconstructed control references and limiter flags, and SVC bank
    currents.  Events are applied before the step containing their time.
    """
    from . import _kernel as K

    scenario.validate()
    sim = scenario.sim
    dt, rec_every = sim.dt, sim.record_every
    n_total = int(round(sim.t_end / dt))

    # segment boundaries at event steps ("swap before the containing step")
    bounds = sorted({0, n_total} | {
        min(n_total, int(np.floor(ev.t / dt + 1e-9))) for ev in scenario.events})

    arrays = _build_arrays(scenario)
    x = _initial_state(scenario, arrays)
    nx = x.shape[0]
    n_rows = n_total // rec_every + 1
    recbuf = np.empty((n_rows, nx + 1))
    recbuf[0, 0] = 0.0
    recbuf[0, 1:] = x
    ri = 1

    for seg_start, seg_end in zip(bounds[:-1], bounds[1:]):
        if seg_end == seg_start:
            continue
        t0, t1 = seg_start * dt, seg_end * dt
        active = scenario.with_events_applied(t0 + 0.5 * dt)
        arrays = _build_arrays(active)
        seg_rows = seg_end // rec_every - seg_start // rec_every
        seg_buf = np.empty((max(seg_rows, 1), nx + 1))
        x, got, tdiv = K.run(x, t0, t1, dt, *arrays, rec_every, seg_buf,
                             sim.state_ceiling, seg_start % rec_every)
        if tdiv >= 0.0:
            raise NumericalDivergence(
                f"state magnitude ceiling exceeded at t={tdiv:.6f} s", t=tdiv)
        recbuf[ri:ri + got] = seg_buf[:got]
        ri += got

    recbuf = recbuf[:ri] if n_total > 0 else recbuf[:0]
    return _assemble_trace(scenario, recbuf)


# ---------------------------------------------------------------------------
# internal plumbing

def _vsc_param_row(dev: VscDevice, scn: NetworkScenario, bus_index: dict) -> np.ndarray:
    from . import _kernel as K

    zb = scn.z_base
    row = np.zeros(K.VP_NP)
    row[K.VP_BUS] = bus_index[dev.bus]
    row[K.VP_RAC] = dev.r_ac_ohm / zb
    row[K.VP_LS] = dev.l_ac_h / zb
    row[K.VP_CS] = dev.c_dc_uf * 1e-6 * zb
    row[K.VP_KPVD] = dev.k_pvd
    row[K.VP_KIVD] = dev.k_ivd
    row[K.VP_KPVQ] = dev.k_pvq
    row[K.VP_KIVQ] = dev.k_ivq
    row[K.VP_KPI] = dev.k_pi
    row[K.VP_KII] = dev.k_ii
    row[K.VP_WL] = scn.omega_b * dev.l_ac_h / zb
    row[K.VP_DVL] = dev.delta_vloop
    row[K.VP_DCL] = dev.delta_cloop
    row[K.VP_DPWM] = dev.delta_pwm
    row[K.VP_VDCREF] = dev.v_dcref
    row[K.VP_VREF] = dev.v_ref
    row[K.VP_PLLKP] = dev.pll_kp
    row[K.VP_PLLKI] = dev.pll_ki
    row[K.VP_TVM] = dev.tau_vm
    row[K.VP_TPWM] = dev.tau_pwm
    row[K.VP_GCH] = dev.g_chopper
    return row


def _build_arrays(scn: NetworkScenario):
    from . import _kernel as K

    bus_index = {b.id: i for i, b in enumerate(scn.buses)}
    busB = np.array([b.b_shunt for b in scn.buses], float)
    busG = np.array([b.g_shunt for b in scn.buses], float)
    for svc in scn.svcs:
        busB[bus_index[svc.bus]] += svc.b
    bf = np.array([bus_index[br.f] for br in scn.branches], np.int64)
    bt = np.array([bus_index[br.t] for br in scn.branches], np.int64)
    bR = np.array([br.r for br in scn.branches], float)
    bX = np.array([br.x for br in scn.branches], float)
    sbus = np.array([bus_index[s.bus] for s in scn.sources], np.int64)
    sE = np.array([s.e for s in scn.sources], float)
    sPh = np.array([np.deg2rad(s.phase_deg) for s in scn.sources], float)
    sR = np.array([s.r for s in scn.sources], float)
    sX = np.array([s.x for s in scn.sources], float)
    sEh = np.array([s.harmonic_pu for s in scn.sources], float)
    sWh = np.array([2.0 * np.pi * s.harmonic_hz for s in scn.sources], float)
    sPhh = np.array([np.deg2rad(s.harmonic_phase_deg) for s in scn.sources], float)
    jbus = np.array([bus_index[j.bus] for j in scn.injections], np.int64)
    jI = np.array([j.i_amp for j in scn.injections], float)
    jPh = np.array([np.deg2rad(j.phase_deg) for j in scn.injections], float)
    if scn.vscs:
        vp = np.vstack([_vsc_param_row(d, scn, bus_index) for d in scn.vscs])
    else:
        vp = np.zeros((0, K.VP_NP))
    return (busB, busG, bf, bt, bR, bX, sbus, sE, sPh, sR, sX,
            sEh, sWh, sPhh, jbus, jI, jPh, vp)


def _initial_state(scn: NetworkScenario, arrays) -> np.ndarray:
    from . import _kernel as K

    nb = len(scn.buses)
    nbr = len(scn.branches)
    ns = len(scn.sources)
    nv = len(scn.vscs)
    nx = 3 * nb + 3 * nbr + 3 * ns + K.NV_STATES * nv
    x0 = np.zeros(nx)
    for b in range(nb):
        for p in range(3):
            x0[3 * b + p] = np.cos(-p * 2.0 * np.pi / 3.0)
    ofs = 3 * nb + 3 * nbr + 3 * ns
    for v, dev in enumerate(scn.vscs):
        o = ofs + K.NV_STATES * v
        x0[o + 3] = dev.v_dcref
        x0[o + 10] = 1.0
        x0[o + 11] = np.sqrt(1.5)
        x0[o + 12] = 0.0
    return x0


def _assemble_trace(scn: NetworkScenario, recbuf: np.ndarray) -> SignalTrace:
    from . import _kernel as K

    t = recbuf[:, 0]
    state = recbuf[:, 1:]
    bus_index = {b.id: i for i, b in enumerate(scn.buses)}
    nb, nbr, ns = len(scn.buses), len(scn.branches), len(scn.sources)
    ofs_br = 3 * nb
    ofs_s = ofs_br + 3 * nbr
    ofs_v = ofs_s + 3 * ns

    channels: list[str] = []
    cols: list[np.ndarray] = []

    def add(name, col):
        channels.append(name)
        cols.append(col)

    for b in scn.buses:
        i = bus_index[b.id]
        for p, ph in enumerate("abc"):
            add(f"bus{b.id}.v{ph}", state[:, 3 * i + p])
    for k, br in enumerate(scn.branches):
        for p, ph in enumerate("abc"):
            add(f"branch{br.f}-{br.t}.i{ph}", state[:, ofs_br + 3 * k + p])
    for k, src in enumerate(scn.sources):
        for p, ph in enumerate("abc"):
            add(f"{src.name}.i{ph}", state[:, ofs_s + 3 * k + p])

    # reconstruct controller signals segment-by-segment so event-swapped
    # parameters (e.g. a stepped V_ref) are honoured
    ev_times = sorted({ev.t for ev in scn.events})
    seg_edges = [0.0] + ev_times + [scn.sim.t_end + 1.0]
    for k, dev in enumerate(scn.vscs):
        blk = state[:, ofs_v + K.NV_STATES * k: ofs_v + K.NV_STATES * (k + 1)]
        for j, nm in enumerate(VSC_STATE_NAMES):
            add(f"{dev.name}.{nm}", blk[:, j])
        vdc = blk[:, 3]
        vabc = state[:, 3 * bus_index[dev.bus]: 3 * bus_index[dev.bus] + 3]
        derived = {nm: np.empty(len(t)) for nm in VSC_DERIVED_NAMES}
        for lo, hi in zip(seg_edges[:-1], seg_edges[1:]):
            m = (t >= lo) & (t < hi)
            if not np.any(m):
                continue
            active_dev = scn.with_events_applied(lo).device(dev.name)
            row = _vsc_param_row(active_dev, scn, bus_index)
            seg = reconstruct_control_signals(vabc[m], blk[m], row)
            for nm in VSC_DERIVED_NAMES:
                derived[nm][m] = seg[nm]
        for nm in VSC_DERIVED_NAMES:
            add(f"{dev.name}.{nm}", derived[nm])
        ich = dev.g_chopper * np.maximum(vdc - CHOPPER_RATIO * dev.v_dcref, 0.0)
        add(f"{dev.name}.idc", -ich)

    if len(t) >= 5:
        dtr = (t[-1] - t[0]) / (len(t) - 1)
        for svc in scn.svcs:
            i = bus_index[svc.bus]
            for p, ph in enumerate("abc"):
                dv = fd_derivative(state[:, 3 * i + p], dtr)
                add(f"{svc.name}.i{ph}", (svc.b / scn.omega_b) * dv)

    return SignalTrace(t, np.column_stack(cols) if cols else np.zeros((len(t), 0)),
                       channels)
