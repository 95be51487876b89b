"""Unit tests for trace containers and CSV interchange."""

import numpy as np
import pytest

from oscilloc.errors import MissingChannel, NonUniformSampling, ParseError
from oscilloc.traces import EnergyTrace, SignalTrace, require_same_grid


def _trace(n=100, dt=1e-3, channels=("a", "b")):
    t = np.arange(n) * dt
    vals = np.column_stack([np.sin(t * (k + 1)) for k in range(len(channels))])
    return SignalTrace(t, vals, list(channels))


class TestSignalTrace:
    def test_channel_access(self):
        tr = _trace()
        assert "a" in tr and "c" not in tr
        assert tr.channel("b").shape == (100,)
        with pytest.raises(MissingChannel, match="'c'"):
            tr.channel("c")

    def test_duplicate_channels_rejected(self):
        with pytest.raises(ValueError):
            SignalTrace(np.arange(3.0), np.zeros((3, 2)), ["x", "x"])

    def test_slice_time(self):
        tr = _trace(1000)
        sub = tr.slice_time(0.25, 0.75)
        assert sub.t[0] >= 0.25 and sub.t[-1] <= 0.75
        assert sub.channels == tr.channels

    def test_jittered_grid_rejected(self):
        t = np.arange(100) * 1e-3
        t[50] += 2e-4
        tr = SignalTrace(t, np.zeros((100, 1)), ["x"])
        with pytest.raises(NonUniformSampling):
            tr.dt

    def test_csv_round_trip(self, tmp_path):
        tr = _trace()
        path = tmp_path / "trace.csv"
        tr.to_csv(path)
        back = SignalTrace.from_csv(path)
        assert back.channels == tr.channels
        assert np.array_equal(back.values, tr.quantized().values)

    def test_header_only_round_trip(self, tmp_path):
        tr = SignalTrace(np.empty(0), np.empty((0, 2)), ["a", "b"])
        path = tmp_path / "empty.csv"
        tr.to_csv(path)
        assert path.read_text().splitlines() == ["time,a,b"]

    def test_quantized_is_idempotent(self):
        q = _trace().quantized()
        assert np.array_equal(q.values, q.quantized().values)

    def test_from_csv_requires_time_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ParseError, match="time"):
            SignalTrace.from_csv(path)


class TestGrids:
    def test_require_same_grid(self):
        a, b = _trace(), _trace()
        require_same_grid(a, b)
        from oscilloc.errors import MismatchedGrid
        c = _trace(dt=2e-3)
        with pytest.raises(MismatchedGrid):
            require_same_grid(a, c)


class TestEnergyTrace:
    def test_csv_export(self, tmp_path):
        t = np.arange(5) * 0.1
        tr = EnergyTrace(t, t ** 2, "H", "svg1")
        path = tmp_path / "h.csv"
        tr.to_csv(path)
        lines = path.read_text().splitlines()
        assert len(lines) == 6
