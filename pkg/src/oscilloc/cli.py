"""Command-line interface.

Subcommands::

    oscilloc simulate --scenario S --out DIR     run a scenario, export traces
    oscilloc locate   (--scenario S | --traces DIR) --out DIR
    oscilloc dfa      --scenario S [--limiter L] [--band LO:HI] [--out DIR]
    oscilloc analyze  CSV [--channel CH ...] [--out DIR]

Exit codes: 0 success, 1 domain error (bad input, failed analysis),
2 internal failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .errors import OscillocError

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_INTERNAL = 2

TRACE_FILE = "trace.csv"
MANIFEST_FILE = "manifest.json"


def _band(text: str):
    try:
        lo, hi = text.split(":")
        lo, hi = float(lo), float(hi)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"band must be 'f_lo:f_hi', got {text!r}") from None
    if not 0 <= lo < hi:
        raise argparse.ArgumentTypeError("band requires 0 <= f_lo < f_hi")
    return lo, hi


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="oscilloc",
                                description="simulate and locate sub-synchronous "
                                            "oscillation sources among converters")
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a scenario and export traces")
    sim.add_argument("--scenario", required=True)
    sim.add_argument("--out", required=True)

    loc = sub.add_parser("locate", help="run the source-location pipeline")
    g = loc.add_mutually_exclusive_group(required=True)
    g.add_argument("--scenario")
    g.add_argument("--traces", help="directory produced by 'simulate'")
    loc.add_argument("--out", required=True)
    loc.add_argument("--window", type=float, default=None,
                     help="sliding-mean window for the energy monitor (s)")
    loc.add_argument("--mu-threshold", type=float, default=None)

    dfa = sub.add_parser("dfa", help="describing-function limit-cycle analysis")
    dfa.add_argument("--scenario", required=True)
    dfa.add_argument("--limiter", choices=["vloop", "cloop", "pwm"], default="pwm")
    dfa.add_argument("--band", type=_band, default=(1.0, 200.0))
    dfa.add_argument("--out", default=None)

    ana = sub.add_parser("analyze", help="spectral analysis of a waveform CSV")
    ana.add_argument("csv")
    ana.add_argument("--channel", action="append", default=None)
    ana.add_argument("--out", default=None)
    ana.add_argument("--fft-segment", type=int, default=4096)
    ana.add_argument("--fft-overlap", type=float, default=0.5)
    ana.add_argument("--band", type=_band, default=(1.0, 200.0))
    ana.add_argument("--mu-threshold", type=float, default=0.10)
    return p


# ---------------------------------------------------------------------------
# simulate

def _write_manifest(out: Path, scn, devices) -> None:
    manifest = {
        "scenario": scn.name,
        "scenario_hash": scn.content_hash(),
        "dt": scn.sim.dt,
        "record_every": scn.sim.record_every,
        "duration": scn.sim.t_end,
        "analysis": dataclasses.asdict(scn.analysis),
        "devices": [dataclasses.asdict(d) for d in devices],
    }
    (out / MANIFEST_FILE).write_text(json.dumps(manifest, indent=2))


def cmd_simulate(args) -> int:
    from . import grid_sim, locator
    from .scenario import load_scenario

    scn = load_scenario(args.scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trace = grid_sim.run_scenario(scn)
    trace.to_csv(out / TRACE_FILE)
    # per-bus and per-device views for plotting
    groups: dict[str, list[str]] = {}
    for ch in trace.channels:
        groups.setdefault(ch.split(".", 1)[0], []).append(ch)
    from .traces import SignalTrace
    for name, chans in groups.items():
        SignalTrace(trace.t, trace.channel_block(chans) if len(trace.t) else
                    trace.values[:, [trace.channels.index(c) for c in chans]],
                    chans).to_csv(out / f"{name}.csv")
    _write_manifest(out, scn, locator.devices_from_scenario(scn))
    print(f"wrote {len(groups) + 1} trace files to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# locate

def _load_trace_dir(path: Path):
    from .locator import DeviceMeta
    from .scenario import AnalysisConfig
    from .traces import SignalTrace

    from .errors import ParseError

    try:
        manifest = json.loads((path / MANIFEST_FILE).read_text())
        devices = [DeviceMeta(**d) for d in manifest["devices"]]
        analysis = AnalysisConfig(**manifest["analysis"])
        name = manifest["scenario"]
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ParseError(
            f"{path}: not a trace directory produced by 'simulate' "
            f"({exc})") from exc
    trace = SignalTrace.from_csv(path / TRACE_FILE)
    return trace, devices, analysis, name


def cmd_locate(args) -> int:
    from . import locator

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.scenario:
        # simulate into the output directory, then analyze the exported
        # files so results are identical to a separate simulate+locate run
        sim_args = argparse.Namespace(scenario=args.scenario,
                                      out=str(out / "traces"))
        cmd_simulate(sim_args)
        trace_dir = out / "traces"
    else:
        trace_dir = Path(args.traces)
    trace, devices, analysis, name = _load_trace_dir(trace_dir)
    if args.window is not None:
        analysis = dataclasses.replace(analysis, window=args.window)
    if args.mu_threshold is not None:
        analysis = dataclasses.replace(analysis, mu_threshold=args.mu_threshold)

    report = locator.build_report(trace, devices, analysis, scenario_name=name)
    (out / "report.json").write_text(report.to_json() + "\n")
    (out / "report.txt").write_text(report.table() + "\n")
    if report.oscillation_detected:
        _write_intermediates(out, trace, devices, analysis, report)
    print(report.table())
    return EXIT_OK


def _write_intermediates(out: Path, trace, devices, analysis, report) -> None:
    from . import locator, spectral

    by_name = {d.name: d for d in devices}
    t0 = report.onset_t
    for cand in report.candidates:
        dev = by_name[cand.node]
        try:
            locator.device_desp(trace, dev, analysis, t0).to_csv(
                out / f"desp_{dev.name}.csv")
        except OscillocError:
            pass
        try:
            sub = trace.slice_time(t0, min(trace.t[-1], t0 + analysis.cls_window))
            y = sub.channel(f"{dev.name}.ia")
            fs = 1.0 / sub.dt
            y, fs = locator._decimate_to(y, fs, analysis.cls_fs)
            import numpy as np
            bmap = spectral.bicoherence(np.arange(len(y)) / fs, y - np.mean(y),
                                        nperseg=analysis.cls_segment,
                                        overlap=analysis.cls_overlap)
            bmap.to_csv(out / f"bicoherence_{dev.name}.csv")
        except OscillocError:
            pass


# ---------------------------------------------------------------------------
# dfa

def cmd_dfa(args) -> int:
    from . import dfa as dfa_mod
    from .scenario import load_scenario

    scn = load_scenario(args.scenario)
    if len(scn.vscs) != 1:
        raise OscillocError(
            f"dfa needs a scenario with exactly one vsc, found {len(scn.vscs)}")
    dev = scn.vscs[0]
    model = dfa_mod.LoopModel(
        k_pvd=dev.k_pvd, k_ivd=dev.k_ivd, k_pi=dev.k_pi, k_ii=dev.k_ii,
        k_pwm=dev.k_pwm, tau1=dev.tau1, tau2=dev.tau2,
        l=dev.l_ac_h, r=dev.r_ac_ohm, c=dev.c_dc_uf * 1e-6,
        v_dc=dev.v_dcref)
    delta = {"vloop": dev.delta_vloop, "cloop": dev.delta_cloop,
             "pwm": dev.delta_pwm}[args.limiter]
    sols = dfa_mod.solve_harmonic_balance(model, limiter=args.limiter,
                                          delta=delta, band=args.band)
    for s in sols:
        kind = "stable" if s.stable else "unstable"
        print(f"{kind} self-sustained solution: f0 = {s.f_hz:.2f} Hz, "
              f"amplitude = {s.amplitude:.4g} ({s.limiter} limiter, "
              f"delta = {s.delta:g})")
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        dfa_mod.write_bode_csv(outdir / "bode.csv", model, limiter=args.limiter)
        print(f"wrote {outdir / 'bode.csv'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# analyze

def cmd_analyze(args) -> int:
    import numpy as np

    from . import locator, spectral
    from .traces import SignalTrace

    trace = SignalTrace.from_csv(args.csv)
    channels = args.channel or trace.channels
    outdir = Path(args.out) if args.out else None
    if outdir:
        outdir.mkdir(parents=True, exist_ok=True)
    import pandas as pd
    for ch in channels:
        y = trace.channel(ch)
        spec = spectral.psd_estimate(trace.t, y, nperseg=args.fft_segment,
                                     overlap=args.fft_overlap)
        mu = thd = None
        y_ac = y - np.mean(y)
        nseg = min(args.fft_segment, 256)
        try:
            bmap = spectral.bicoherence(trace.t, y_ac, nperseg=nseg, overlap=0.875)
            rng = np.random.default_rng(locator.analysis_seed(ch))
            dither = np.std(y_ac) * 1e-2 + 1e-12
            mu = spectral.mu_index(trace.t, y_ac, nperseg=nseg, overlap=0.875,
                                   dither=dither, rng=rng)
        except OscillocError:
            bmap = None
        try:
            thd = spectral.thd(trace.t, y)
        except OscillocError:
            pass
        parts = [f"{ch}:"]
        peaks = spectral.spectrum_peaks(spec, n_peaks=1, f_lo=args.band[0],
                                        f_hi=args.band[1]) or [(float("nan"), 0.0)]
        parts.append(f"peak {peaks[0][0]:.2f} Hz")
        parts.append(f"mu = {mu:.4f} ({'nonlinear' if mu > args.mu_threshold else 'linear'})"
                     if mu is not None else "mu unavailable")
        parts.append(f"THD = {100.0 * thd:.2f}%" if thd is not None else "THD unavailable")
        print("  ".join(parts))
        if outdir:
            tag = ch.replace("/", "_")
            pd.DataFrame({"f_hz": spec.f, "psd": spec.pxx}).to_csv(
                outdir / f"psd_{tag}.csv", index=False, float_format="%.9g")
            if bmap is not None:
                bmap.to_csv(outdir / f"bicoherence_{tag}.csv")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_DOMAIN if exc.code not in (0, None) else EXIT_OK
    try:
        handler = {"simulate": cmd_simulate, "locate": cmd_locate,
                   "dfa": cmd_dfa, "analyze": cmd_analyze}[args.command]
        return handler(args)
    except OscillocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
