"""End-to-end tests of the command-line interface and its exit codes."""

import json
import textwrap

import numpy as np
import pytest

from oscilloc import cli
from oscilloc.scenario import builtin_scenario_path
from oscilloc.traces import SignalTrace

TABLE1 = str(builtin_scenario_path("table1_single_vsc"))


def _short_scenario(tmp_path, t_end="0.0"):
    p = tmp_path / "short.ini"
    p.write_text(textwrap.dedent(f"""
        [scenario]
        name = short

        [sim]
        dt = 5e-5
        t_end = {t_end}

        [bus:0]
        b_shunt = 0.2
        g_shunt = 0.05

        [source:grid]
        bus = 0
    """))
    return str(p)


class TestExitCodes:
    def test_missing_scenario_is_domain_error(self, tmp_path):
        rc = cli.main(["simulate", "--scenario", str(tmp_path / "absent.ini"),
                       "--out", str(tmp_path / "out")])
        assert rc == 1

    def test_malformed_scenario_is_domain_error(self, tmp_path):
        bad = tmp_path / "bad.ini"
        bad.write_text("[scenario]\nname = x\n[bus:0]\nbogus = 1\n")
        rc = cli.main(["simulate", "--scenario", str(bad),
                       "--out", str(tmp_path / "out")])
        assert rc == 1

    def test_bad_flags_are_domain_error(self):
        assert cli.main(["locate"]) == 1
        assert cli.main(["dfa", "--scenario", TABLE1, "--band", "nonsense"]) == 1


class TestSimulate:
    def test_writes_traces_and_manifest(self, tmp_path):
        out = tmp_path / "out"
        assert cli.main(["simulate", "--scenario",
                         _short_scenario(tmp_path, "0.5"),
                         "--out", str(out)]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["scenario"] == "short"
        assert manifest["dt"] == 5e-5
        assert "scenario_hash" in manifest
        tr = SignalTrace.from_csv(out / "trace.csv")
        assert "bus0.va" in tr and tr.n > 0

    def test_zero_duration_writes_header_only_csvs(self, tmp_path):
        out = tmp_path / "out"
        assert cli.main(["simulate", "--scenario", _short_scenario(tmp_path),
                         "--out", str(out)]) == 0
        lines = (out / "trace.csv").read_text().splitlines()
        assert len(lines) == 1 and lines[0].startswith("time,")


class TestLocate:
    def test_invalid_trace_dir_is_domain_error(self, tmp_path):
        out = tmp_path / "traces"
        out.mkdir()
        t = np.arange(0, 5, 1e-3)
        SignalTrace(t, np.zeros((len(t), 1)), ["lonely.va"]).to_csv(
            out / "trace.csv")  # no manifest alongside
        rc = cli.main(["locate", "--traces", str(out),
                       "--out", str(tmp_path / "rep")])
        assert rc == 1

    def test_report_files_written(self, tmp_path):
        out = tmp_path / "rep"
        assert cli.main(["locate", "--scenario", TABLE1,
                         "--out", str(out)]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["scenario"] == "table1_single_vsc"
        assert report["oscillation_detected"] is False
        assert (out / "report.txt").exists()


class TestDfa:
    def test_table1_prints_solution(self, capsys):
        assert cli.main(["dfa", "--scenario", TABLE1]) == 0
        out = capsys.readouterr().out
        assert "stable self-sustained solution" in out

    def test_band_without_crossing(self, capsys, tmp_path):
        rc = cli.main(["dfa", "--scenario", TABLE1, "--band", "200:400"])
        assert rc == 1
        assert "phase" in capsys.readouterr().err.lower()

    def test_sub_unity_gain_variant(self, tmp_path, capsys):
        src = builtin_scenario_path("table1_single_vsc").read_text()
        weak = tmp_path / "weak.ini"
        weak.write_text(src + "\n[vsc:svg]\nk_pwm = 1e-9\n"
                        if "[vsc:svg]" not in src else
                        src.replace("[vsc:svg]", "[vsc:svg]\nk_pwm = 1e-9"))
        rc = cli.main(["dfa", "--scenario", str(weak)])
        assert rc == 1


class TestAnalyze:
    @staticmethod
    def _write_csv(tmp_path, t, x, name="sig.csv"):
        p = tmp_path / name
        SignalTrace(np.asarray(t), np.asarray(x)[:, None], ["x"]).to_csv(p)
        return str(p)

    def test_coupled_triple_reports_nonlinear(self, tmp_path, capsys):
        rng = np.random.default_rng(3)
        t = np.arange(4000) / 1000.0
        p1 = rng.uniform(0, 2 * np.pi) + np.cumsum(rng.standard_normal(4000)) * 0.12
        p2 = rng.uniform(0, 2 * np.pi) + np.cumsum(rng.standard_normal(4000)) * 0.12
        x = (np.cos(2 * np.pi * 21 * t + p1) + np.cos(2 * np.pi * 34 * t + p2)
             + 0.6 * np.cos(2 * np.pi * 55 * t + p1 + p2)
             + 0.3 * rng.standard_normal(4000))
        rc = cli.main(["analyze", self._write_csv(tmp_path, t, x)])
        assert rc == 0
        assert "nonlinear" in capsys.readouterr().out

    def test_pure_tone_reports_zero_thd(self, tmp_path, capsys):
        t = np.arange(4000) / 1000.0
        rc = cli.main(["analyze",
                       self._write_csv(tmp_path, t, np.sin(2 * np.pi * 50 * t))])
        assert rc == 0
        assert "THD = 0.00%" in capsys.readouterr().out

    def test_jittered_timestamps_rejected(self, tmp_path):
        t = np.arange(2000) / 1000.0
        x = np.sin(2 * np.pi * 50 * t)
        t = t.copy()
        t[500] += 5e-4
        p = tmp_path / "jitter.csv"
        with open(p, "w") as fh:
            fh.write("time,x\n")
            for ti, xi in zip(t, x):
                fh.write(f"{ti:.9g},{xi:.9g}\n")
        assert cli.main(["analyze", str(p)]) == 1

    def test_analysis_products_written(self, tmp_path):
        t = np.arange(4000) / 1000.0
        csv = self._write_csv(tmp_path, t, np.sin(2 * np.pi * 50 * t))
        out = tmp_path / "products"
        assert cli.main(["analyze", csv, "--out", str(out)]) == 0
        assert (out / "psd_x.csv").exists()
