"""Unit tests for the describing-function analysis module."""

import numpy as np
import pytest

from oscilloc import dfa
from oscilloc.errors import (NoAmplitudeSolution, NonPositiveAmplitude,
                             NoPhaseCrossing)


class TestSaturationDf:
    def test_linear_region_is_unity(self):
        assert dfa.saturation_df(0.5, 1.0) == 1.0

    def test_reference_value_at_twice_delta(self):
        # closed-form: N(2 delta) = (2/pi)(pi/6 + sqrt(3)/4)
        assert abs(dfa.saturation_df(2.0, 1.0) - 0.6090) < 1e-4

    def test_monotone_decreasing_beyond_delta(self):
        amps = np.linspace(1.0, 50.0, 200)
        vals = [dfa.saturation_df(a, 1.0) for a in amps]
        assert np.all(np.diff(vals) <= 0.0)

    def test_deep_saturation_asymptote(self):
        a = 1e4
        assert np.isclose(dfa.saturation_df(a, 1.0), 4.0 / (np.pi * a),
                          rtol=1e-6)

    def test_rejects_bad_arguments(self):
        with pytest.raises(NonPositiveAmplitude):
            dfa.saturation_df(0.0, 1.0)
        with pytest.raises(ValueError):
            dfa.saturation_df(1.0, -1.0)


class TestLoopResponse:
    def test_limiter_position_does_not_change_product(self):
        model = dfa.LoopModel()
        s = 2j * np.pi * 35.0
        vals = [dfa.loop_response(model, s, limiter=lim)
                for lim in ("vloop", "cloop", "pwm")]
        assert np.allclose(vals, vals[0])

    def test_bode_columns(self):
        model = dfa.LoopModel()
        data = dfa.bode_data(model, f_hz=np.array([10.0, 20.0, 40.0]))
        assert data.shape == (3, 3)
        # phase column is unwrapped: no 2 pi jumps between adjacent rows
        assert np.all(np.abs(np.diff(data[:, 2])) < np.pi)

    def test_bode_csv(self, tmp_path):
        path = tmp_path / "bode.csv"
        dfa.write_bode_csv(path, dfa.LoopModel())
        header = path.read_text().splitlines()[0]
        assert header == "f_hz,mag_db,phase_rad"


class TestHarmonicBalance:
    def test_stable_solution_location(self):
        sols = dfa.solve_harmonic_balance(dfa.LoopModel())
        stable = [s for s in sols if s.stable]
        assert len(stable) == 1
        assert abs(stable[0].f_hz - 35.7) < 1.0
        assert stable[0].amplitude > stable[0].delta

    def test_solution_satisfies_balance(self):
        model = dfa.LoopModel()
        sol = [s for s in dfa.solve_harmonic_balance(model) if s.stable][0]
        h = dfa.loop_response(model, 2j * np.pi * sol.f_hz)
        n = dfa.saturation_df(sol.amplitude, sol.delta)
        assert abs(n * abs(h) - 1.0) < 1e-3
        assert abs(np.angle(-h)) < 1e-3

    def test_band_without_crossing_raises(self):
        with pytest.raises(NoPhaseCrossing):
            dfa.solve_harmonic_balance(dfa.LoopModel(), band=(200.0, 400.0))

    def test_sub_unity_gain_raises(self):
        model = dfa.LoopModel(k_pwm=1e-9)
        with pytest.raises((NoAmplitudeSolution, NoPhaseCrossing)):
            dfa.solve_harmonic_balance(model)


class TestLoopSimulation:
    def test_limit_cycle_is_bounded_and_periodic(self):
        model = dfa.LoopModel()
        t, _y, u = dfa.simulate_loop(model, t_end=4.0, keep_last=1.0)
        u = u - np.mean(u)
        assert np.max(np.abs(u)) < 1e8
        # amplitude of the first and second half agree -> steady limit cycle
        half = len(u) // 2
        a1, a2 = np.std(u[:half]), np.std(u[half:])
        assert abs(a1 - a2) / a1 < 0.05

    def test_deterministic(self):
        model = dfa.LoopModel()
        _t1, _y1, u1 = dfa.simulate_loop(model, t_end=1.0, keep_last=0.2)
        _t2, _y2, u2 = dfa.simulate_loop(model, t_end=1.0, keep_last=0.2)
        assert np.array_equal(u1, u2)
