"""Command-line surface: analyze, simulate, impedance, bench.

Exit codes: 0 success, 1 error, 2 when `analyze` finds the interconnection
Unstable (scriptable).  The default output directory is $PHILAB_OUT, falling
back to the current directory.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import bench as bench_mod
from . import stability
from .blocks import reduced_order_impedance
from .engine import PhilEngine, classify_trace, measure_input_impedance, build_load_block
from .errors import PhilabError
from .freqdomain import Verdict, tf_eval, write_freq_response_csv, FreqResponse
from .scenario_io import parse_scenario
from .stability import _load_reduced_params


def _out_dir(arg):
    out = arg or os.environ.get("PHILAB_OUT") or "."
    os.makedirs(out, exist_ok=True)
    return out


def _cmd_analyze(args) -> int:
    scenario = parse_scenario(args.scenario)
    bundle = stability.assess(
        scenario,
        f_min_hz=args.fmin,
        f_max_hz=args.fmax,
        points_per_decade=args.ppd,
    )
    out = _out_dir(args.out)
    stability.write_report_txt(bundle.report, os.path.join(out, "report.txt"))
    stability.write_report_kv(bundle.report, os.path.join(out, "report.kv"))
    write_freq_response_csv(bundle.z_source, os.path.join(out, "z_source.csv"))
    write_freq_response_csv(bundle.z_load, os.path.join(out, "z_load.csv"))
    write_freq_response_csv(bundle.t_open_loop,
                            os.path.join(out, "t_open_loop.csv"))
    for key, val in bundle.report.as_kv().items():
        print(f"{key}: {val}")
    return 2 if bundle.report.verdict is Verdict.UNSTABLE else 0


def _cmd_simulate(args) -> int:
    scenario = parse_scenario(args.scenario)
    engine = PhilEngine(scenario)
    trace = engine.run()
    out = _out_dir(args.out)
    trace.write_csv(os.path.join(out, "trace.csv"), decimate=args.decimate)
    cls = classify_trace(trace, scenario.nominal_v)
    print(f"classification: {cls.label}")
    print(f"diverged: {cls.diverged}")
    print(f"growth_cycles: {cls.growth_cycles}")
    print(f"rows: {trace.n_rows}")
    return 0


def _cmd_impedance(args) -> int:
    scenario = parse_scenario(args.scenario)
    if not 0 <= args.load < len(scenario.loads):
        raise PhilabError(
            f"--load {args.load} out of range (scenario has "
            f"{len(scenario.loads)} loads)")
    k = args.load
    p_bias = scenario.initial_power(k)
    n_pts = max(4, int(math.ceil(math.log10(args.fmax / args.fmin) * 4)) + 1)
    grid = np.logspace(math.log10(args.fmin), math.log10(args.fmax), n_pts)
    measured = measure_input_impedance(
        lambda: build_load_block(scenario.loads[k]),
        {"v_dc_V": scenario.nominal_v, "p_ref_W": p_bias},
        grid,
        dt=scenario.dt_s,
    )
    z_tf = reduced_order_impedance(
        _load_reduced_params(scenario, k, at_final_power=False))
    predicted_vals = np.array(
        [tf_eval(z_tf, 2.0 * math.pi * f) for f in measured.freq_hz])
    predicted = FreqResponse.from_samples(measured.freq_hz, predicted_vals)
    out = _out_dir(args.out)
    write_freq_response_csv(measured, os.path.join(out, "impedance_measured.csv"))
    write_freq_response_csv(predicted, os.path.join(out, "impedance_predicted.csv"))
    mag_err = np.max(np.abs(measured.mag_db - predicted.mag_db))
    ph_err = np.max(np.abs(
        ((measured.phase_deg - predicted.phase_deg) + 180.0) % 360.0 - 180.0))
    print(f"points: {len(measured.freq_hz)}")
    print(f"max_mag_error_db: {mag_err!r}")
    print(f"max_phase_error_deg: {ph_err!r}")
    return 0


def _cmd_bench(args) -> int:
    a = parse_scenario(args.scenario_a)
    b = parse_scenario(args.scenario_b)
    report = bench_mod.compare(a, b, n_steps=args.steps, n_repeats=args.repeats)
    for key, val in report.as_kv().items():
        print(f"{key}: {val}")
    print(report.CSV_HEADER)
    print(report.csv_row())
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="philab",
        description="DC-bus stability workbench: impedance-ratio analysis, "
                    "loop simulation, impedance measurement, benchmarking.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="frequency-domain stability verdict")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--fmin", type=float, default=stability.DEFAULT_F_MIN_HZ)
    p.add_argument("--fmax", type=float, default=stability.DEFAULT_F_MAX_HZ)
    p.add_argument("--ppd", type=float, default=stability.DEFAULT_PPD)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("simulate", help="fixed-step time-domain run")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--decimate", type=int, default=1)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("impedance",
                       help="perturbation measurement vs closed-form model")
    p.add_argument("--scenario", required=True)
    p.add_argument("--load", type=int, required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--fmin", type=float, default=10.0)
    p.add_argument("--fmax", type=float, default=2000.0)
    p.set_defaults(func=_cmd_impedance)

    p = sub.add_parser("bench", help="per-step cost comparison")
    p.add_argument("--scenario-a", required=True)
    p.add_argument("--scenario-b", required=True)
    p.add_argument("--steps", type=int, default=bench_mod.MIN_STEPS)
    p.add_argument("--repeats", type=int, default=bench_mod.MIN_REPEATS)
    p.set_defaults(func=_cmd_bench)
    return parser


def cli(argv=None) -> int:
    """Run one command; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    try:
        return args.func(args)
    except PhilabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(cli())


if __name__ == "__main__":
    main()
