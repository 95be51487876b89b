"""Scenario files: declarative network/device/event descriptions.

Format is INI-style structured text.  Sections::

    [scenario]        name
    [sim]             dt, t_end, record_every, state_ceiling
    [network]         f_hz, s_base_mva, v_base_kv
    [bus:<id>]        b_shunt, g_shunt
    [branch:<f>-<t>]  r, x
    [transformer:<f>-<t>]  x
    [source:<name>]   bus, e, phase_deg, r, x,
                      harmonic_pu, harmonic_hz, harmonic_phase_deg
    [vsc:<name>]      bus, r_ac_ohm, l_ac_h, c_dc_uf, k_pvd, k_ivd, k_pvq,
                      k_ivq, k_pi, k_ii, k_pwm, tau1, tau2, delta_vloop,
                      delta_cloop, delta_pwm, v_dcref, v_ref, pll_kp,
                      pll_ki, tau_vm, tau_pwm, g_chopper
    [svc:<name>]      bus, b
    [injection:<name>]  bus, i_amp, phase_deg
    [event:<n>]       t, target (DEVICE.param), value
    [analysis]        window, trend_window, trend_floor, mu_threshold,
                      fft_segment, fft_overlap, cls_fs, cls_window,
                      dither_snr_db, band_lo, band_hi, onset_step

Unknown sections or keys are rejected with their location.  All impedances
are in per-unit on the declared base; VSC main-circuit values are given in
SI units and converted at load time.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .errors import ParseError

__all__ = [
    "NetworkScenario", "Bus", "Branch", "Source", "VscDevice", "SvcDevice",
    "Injection", "Event", "SimConfig", "AnalysisConfig", "load_scenario",
    "builtin_scenario_path",
]


@dataclass(frozen=True)
class Bus:
    id: int
    b_shunt: float = 0.1
    g_shunt: float = 0.01


@dataclass(frozen=True)
class Branch:
    f: int
    t: int
    r: float
    x: float


@dataclass(frozen=True)
class Source:
    name: str
    bus: int
    e: float = 1.0
    phase_deg: float = 0.0
    r: float = 0.005
    x: float = 0.05
    harmonic_pu: float = 0.0
    harmonic_hz: float = 0.0
    harmonic_phase_deg: float = 0.0


@dataclass(frozen=True)
class VscDevice:
    name: str
    bus: int
    r_ac_ohm: float = 1.224
    l_ac_h: float = 0.03911
    c_dc_uf: float = 300.0
    k_pvd: float = 2.5
    k_ivd: float = 1000.0
    k_pvq: float = 2.0
    k_ivq: float = 20.0
    k_pi: float = 50.0
    k_ii: float = 6250.0
    k_pwm: float = 0.353
    tau1: float = 5e-5
    tau2: float = 3e-4
    delta_vloop: float = 1.2
    delta_cloop: float = 1.5
    delta_pwm: float = 1.0
    v_dcref: float = 1.95
    v_ref: float = 1.0
    pll_kp: float = 700.0
    pll_ki: float = 2.5e5
    tau_vm: float = 0.02
    tau_pwm: float = 1e-3
    g_chopper: float = 2.0


@dataclass(frozen=True)
class SvcDevice:
    name: str
    bus: int
    b: float


@dataclass(frozen=True)
class Injection:
    name: str
    bus: int
    i_amp: float = 0.0
    phase_deg: float = 0.0


@dataclass(frozen=True)
class Event:
    t: float
    target: str  # "<device>.<param>"
    value: float


@dataclass(frozen=True)
class SimConfig:
    dt: float = 5e-5
    t_end: float = 3.0
    record_every: int = 1
    state_ceiling: float = 1e6


@dataclass(frozen=True)
class AnalysisConfig:
    window: float = 1.0          # sliding-mean window for delta-ESP monitoring (s)
    trend_window: float = 0.5    # regression window of the trend test (s)
    trend_floor: float = 0.02    # minimum rise declared an increase (pu-energy)
    energy_floor: float = 1e-5   # minimum oscillation-band energy export (pu-s)
    energy_rel_floor: float = 0.10  # ... relative to the strongest exporter
    mu_threshold: float = 0.10
    fft_segment: int = 4096
    fft_overlap: float = 0.5
    cls_fs: float = 1000.0       # resampling rate for bicoherence classification (Hz)
    cls_window: float = 4.0      # analysis window cap for classification (s)
    cls_segment: int = 256       # bicoherence segment length at cls_fs
    cls_overlap: float = 0.875
    dither_snr_db: float = 40.0  # measurement-noise floor added before bicoherence
    band_lo: float = 1.0
    band_hi: float = 200.0
    onset_step: float = 0.1      # stride of the sliding onset search (s)
    settle: float = 1.0          # start-up interval excluded from monitoring (s)


@dataclass(frozen=True)
class NetworkScenario:
    name: str
    f_hz: float = 50.0
    s_base_mva: float = 100.0
    v_base_kv: float = 35.0
    buses: tuple[Bus, ...] = ()
    branches: tuple[Branch, ...] = ()
    sources: tuple[Source, ...] = ()
    vscs: tuple[VscDevice, ...] = ()
    svcs: tuple[SvcDevice, ...] = ()
    injections: tuple[Injection, ...] = ()
    events: tuple[Event, ...] = ()
    sim: SimConfig = field(default_factory=SimConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)

    @property
    def z_base(self) -> float:
        return self.v_base_kv ** 2 / self.s_base_mva

    @property
    def omega_b(self) -> float:
        return 2.0 * np.pi * self.f_hz

    def device(self, name: str):
        for dev in (*self.vscs, *self.svcs, *self.sources, *self.injections):
            if dev.name == name:
                return dev
        raise KeyError(name)

    def validate(self) -> None:
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            raise ParseError("duplicate bus ids")
        idset = set(ids)
        if not idset:
            raise ParseError("scenario has no buses")
        for br in self.branches:
            if br.f not in idset or br.t not in idset:
                raise ParseError(f"branch {br.f}-{br.t} references an unknown bus")
            if br.x <= 0:
                raise ParseError(f"branch {br.f}-{br.t}: x must be > 0")
        for dev in (*self.sources, *self.vscs, *self.svcs, *self.injections):
            if dev.bus not in idset:
                raise ParseError(f"device {dev.name!r} references unknown bus {dev.bus}")
        names = [d.name for d in (*self.sources, *self.vscs, *self.svcs, *self.injections)]
        if len(set(names)) != len(names):
            raise ParseError("duplicate device names")
        # connectivity (branches only; single-bus scenarios are trivially connected)
        parent = {i: i for i in idset}

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for br in self.branches:
            parent[find(br.f)] = find(br.t)
        if len({find(i) for i in idset}) != 1:
            raise ParseError("network graph is not connected")
        for ev in self.events:
            if not (0.0 <= ev.t <= self.sim.t_end):
                raise ParseError(f"event at t={ev.t} outside [0, t_end]")
            dev, _, param = ev.target.partition(".")
            if not param:
                raise ParseError(f"event target {ev.target!r} must be '<device>.<param>'")
            try:
                obj = self.device(dev)
            except KeyError:
                raise ParseError(f"event target device {dev!r} unknown") from None
            if param not in {f.name for f in fields(obj)}:
                raise ParseError(f"event target parameter {param!r} unknown on {dev!r}")
        if self.sim.dt <= 0 or self.sim.t_end < 0:
            raise ParseError("sim dt must be > 0 and t_end >= 0")
        if self.sim.dt > 1e-4:
            raise ParseError("sim dt must be at most 100 us (one tenth of the "
                             "fastest simulated time constant)")

    def with_events_applied(self, upto: float) -> "NetworkScenario":
        """Scenario with every event at t <= upto folded into the parameters."""
        scn = self
        for ev in sorted(self.events, key=lambda e: e.t):
            if ev.t <= upto:
                scn = scn._apply(ev)
        return scn

    def _apply(self, ev: Event) -> "NetworkScenario":
        dev_name, _, param = ev.target.partition(".")

        def patch(items):
            return tuple(replace(d, **{param: ev.value}) if d.name == dev_name else d
                         for d in items)

        return replace(self, vscs=patch(self.vscs), svcs=patch(self.svcs),
                       sources=patch(self.sources), injections=patch(self.injections))

    def content_hash(self) -> str:
        return hashlib.sha256(repr(self).encode()).hexdigest()[:16]


_SECTION_FIELDS = {
    "scenario": {"name"},
    "sim": {f.name for f in fields(SimConfig)},
    "network": {"f_hz", "s_base_mva", "v_base_kv"},
    "analysis": {f.name for f in fields(AnalysisConfig)},
    "bus": {"b_shunt", "g_shunt"},
    "branch": {"r", "x"},
    "transformer": {"x"},
    "source": {f.name for f in fields(Source)} - {"name"},
    "vsc": {f.name for f in fields(VscDevice)} - {"name"},
    "svc": {f.name for f in fields(SvcDevice)} - {"name"},
    "injection": {f.name for f in fields(Injection)} - {"name"},
    "event": {"t", "target", "value"},
}


def _floats(section, items, where):
    out = {}
    for key, raw in items:
        if key in ("name", "target"):
            out[key] = raw
            continue
        try:
            out[key] = int(raw) if key == "record_every" else float(raw)
        except ValueError:
            raise ParseError(f"[{where}] {key}: not a number: {raw!r}") from None
    return out


def load_scenario(path) -> NetworkScenario:
    """Parse and validate a scenario file.

    ``path`` may also be the bare name of a shipped scenario.
    """
    import os

    if isinstance(path, str) and not path.endswith(".ini") \
            and not os.path.exists(path):
        path = builtin_scenario_path(path)
    cp = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ParseError(f"cannot open scenario {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ParseError(f"{path}: {exc}") from exc

    meta = {"name": "scenario"}
    net = {}
    sim = {}
    analysis = {}
    buses, branches, sources, vscs, svcs, injections, events = [], [], [], [], [], [], []

    for section in cp.sections():
        kind, _, tag = section.partition(":")
        if kind not in _SECTION_FIELDS:
            raise ParseError(f"{path}: unknown section [{section}]")
        allowed = _SECTION_FIELDS[kind]
        for key, _v in cp.items(section):
            if key not in allowed:
                raise ParseError(f"{path}: unknown key {key!r} in section [{section}]")
        vals = _floats(kind, cp.items(section), section)
        if kind == "scenario":
            meta.update(vals)
        elif kind == "network":
            net.update(vals)
        elif kind == "sim":
            sim.update(vals)
        elif kind == "analysis":
            analysis.update(vals)
        elif kind == "bus":
            try:
                bid = int(tag)
            except ValueError:
                raise ParseError(f"{path}: bus section [{section}] needs an integer id") from None
            buses.append(Bus(id=bid, **vals))
        elif kind in ("branch", "transformer"):
            try:
                f_str, t_str = tag.split("-")
                f_id, t_id = int(f_str), int(t_str)
            except ValueError:
                raise ParseError(f"{path}: section [{section}] must be "
                                 f"[{kind}:<from>-<to>]") from None
            if kind == "transformer":
                vals = {"r": 0.0, **vals}
            branches.append(Branch(f=f_id, t=t_id, **vals))
        elif kind == "source":
            sources.append(Source(name=tag, **_with_int_bus(vals, section, path)))
        elif kind == "vsc":
            vscs.append(VscDevice(name=tag, **_with_int_bus(vals, section, path)))
        elif kind == "svc":
            svcs.append(SvcDevice(name=tag, **_with_int_bus(vals, section, path)))
        elif kind == "injection":
            injections.append(Injection(name=tag, **_with_int_bus(vals, section, path)))
        elif kind == "event":
            if "t" not in vals or "target" not in vals or "value" not in vals:
                raise ParseError(f"{path}: section [{section}] needs t, target, value")
            events.append(Event(t=vals["t"], target=vals["target"], value=vals["value"]))

    if "cls_segment" in analysis:
        analysis["cls_segment"] = int(analysis["cls_segment"])
    if "fft_segment" in analysis:
        analysis["fft_segment"] = int(analysis["fft_segment"])
    scn = NetworkScenario(
        name=str(meta["name"]),
        **net,
        buses=tuple(sorted(buses, key=lambda b: b.id)),
        branches=tuple(branches),
        sources=tuple(sources),
        vscs=tuple(vscs),
        svcs=tuple(svcs),
        injections=tuple(injections),
        events=tuple(sorted(events, key=lambda e: e.t)),
        sim=SimConfig(**sim),
        analysis=AnalysisConfig(**analysis),
    )
    scn.validate()
    return scn


def builtin_scenario_path(name: str):
    """Filesystem path of a scenario shipped with the package."""
    from importlib.resources import files

    p = files("oscilloc") / "scenarios" / f"{name}.ini"
    if not p.is_file():
        raise ParseError(f"no builtin scenario named {name!r}")
    return p


def _with_int_bus(vals, section, path):
    if "bus" not in vals:
        raise ParseError(f"{path}: section [{section}] needs a bus")
    vals = dict(vals)
    vals["bus"] = int(vals["bus"])
    return vals
