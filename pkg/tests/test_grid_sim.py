"""Unit tests for the network simulator."""

import dataclasses
import textwrap

import numpy as np
import pytest

from oscilloc import grid_sim
from oscilloc.errors import NumericalDivergence
from oscilloc.scenario import builtin_scenario_path, load_scenario

PASSIVE = """
[scenario]
name = passive

[sim]
dt = 5e-5
t_end = 1.0

[bus:0]
b_shunt = 0.2
g_shunt = 0.05

[source:grid]
bus = 0
e = 1.0
r = 0.01
x = 0.10
"""


def _load(tmp_path, body, name="scn.ini"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(body))
    return load_scenario(p)


class TestPassiveNetwork:
    def test_source_current_matches_phasor_solution(self, tmp_path):
        """Steady state of source + shunt load against the phasor oracle."""
        scn = _load(tmp_path, PASSIVE)
        tr = grid_sim.run_scenario(scn)
        tail = tr.slice_time(0.8, 1.0)
        i_amp = np.sqrt(2.0) * np.std(tail.channel("grid.ia"))
        v_amp = np.sqrt(2.0) * np.std(tail.channel("bus0.va"))
        z_src = 0.01 + 0.10j
        y_load = 0.05 + 0.2j
        i_ref = abs(1.0 / (z_src + 1.0 / y_load))
        v_ref = abs((1.0 / y_load) / (z_src + 1.0 / y_load))
        assert np.isclose(i_amp, i_ref, rtol=1e-3)
        assert np.isclose(v_amp, v_ref, rtol=1e-3)

    def test_event_changes_source_amplitude(self, tmp_path):
        body = PASSIVE + textwrap.dedent("""
            [event:1]
            t = 0.5
            target = grid.e
            value = 0.5
        """)
        tr = grid_sim.run_scenario(_load(tmp_path, body))
        before = np.std(tr.slice_time(0.4, 0.5).channel("bus0.va"))
        after = np.std(tr.slice_time(0.9, 1.0).channel("bus0.va"))
        assert np.isclose(after / before, 0.5, rtol=1e-2)


class TestRunMechanics:
    def test_deterministic(self, tmp_path):
        scn = _load(tmp_path, PASSIVE)
        a = grid_sim.run_scenario(scn)
        b = grid_sim.run_scenario(scn)
        assert np.array_equal(a.values, b.values)

    def test_record_every_decimates(self, tmp_path):
        scn = _load(tmp_path, PASSIVE)
        fine = grid_sim.run_scenario(scn)
        coarse = grid_sim.run_scenario(dataclasses.replace(
            scn, sim=dataclasses.replace(scn.sim, record_every=4)))
        assert np.isclose(coarse.dt, 4 * fine.dt)
        assert np.allclose(coarse.values[1], fine.values[4])

    def test_zero_duration_gives_empty_trace(self):
        scn = load_scenario(builtin_scenario_path("table1_single_vsc"))
        scn = dataclasses.replace(scn, sim=dataclasses.replace(scn.sim,
                                                               t_end=0.0))
        tr = grid_sim.run_scenario(scn)
        assert tr.n == 0 and len(tr.channels) > 0

    def test_divergence_reports_timestamp(self):
        scn = load_scenario(builtin_scenario_path("table1_single_vsc"))
        dev = dataclasses.replace(scn.vscs[0], pll_ki=1e12, pll_kp=1e9)
        scn = dataclasses.replace(scn, vscs=(dev,),
                                  sim=dataclasses.replace(scn.sim, t_end=1.0))
        with pytest.raises(NumericalDivergence, match=r"t="):
            grid_sim.run_scenario(scn)


class TestVscScenario:
    def test_single_vsc_reaches_quiet_steady_state(self, table1_run):
        _scn, tr = table1_run
        tail = tr.slice_time(tr.t[-1] - 0.5, tr.t[-1])
        vm = tail.channel("svg.vm_filt")
        resid = vm - np.polyval(np.polyfit(tail.t, vm, 1), tail.t)
        assert np.std(resid) < 1e-4
        assert abs(np.mean(vm) - 1.0) < 0.02
        vdc = tail.channel("svg.vdc")
        assert abs(np.mean(vdc) - 1.95) < 0.05

    def test_control_channels_exported(self, table1_run):
        _scn, tr = table1_run
        for ch in ("svg.ia", "svg.vdc", "svg.vm_filt", "svg.idc"):
            assert ch in tr
