"""Source/load impedance-ratio stability assessment.

Builds the source output impedance and the composite load input impedance
for a scenario, forms the open-loop ratio including the interface filter and
loop delays, and judges it by encirclement counting with gain/phase margins.
The load side always uses the closed-form reduced-order input impedance,
whatever load model the time-domain scenario carries; a flag substitutes the
measured impedance of each load block for comparison studies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce
from typing import Optional, Sequence, Union

import numpy as np
from numpy.polynomial import polynomial as npoly

from . import engine as _engine
from .blocks import (
    AvgInverterParams,
    BoostParams,
    LcFilterParams,
    ReducedOrderLoadParams,
    lc_output_impedance,
    reduced_order_impedance,
)
from .errors import AmbiguousCrossing, ZeroDenominator
from .freqdomain import (
    FreqResponse,
    RationalTF,
    StabilityReport,
    freq_sweep,
    margins,
    tf_eval,
    tf_ratio,
    tf_series,
)

__all__ = [
    "open_loop_tf",
    "parallel_load_impedance",
    "assess",
    "AssessmentBundle",
    "write_report_txt",
    "write_report_kv",
]

DEFAULT_F_MIN_HZ = 1.0
DEFAULT_F_MAX_HZ = 1e6
DEFAULT_PPD = 200
REFINE_FACTOR = 4

# grid for perturbation measurement of a source without closed-form impedance
MEASURE_F_MIN_HZ = 20.0
MEASURE_F_MAX_HZ = 1e5
MEASURE_PPD = 6
MEASURE_PPD_RESONANCE = 32  # dense band around the power-stage resonance


def open_loop_tf(z_s: RationalTF, z_l: RationalTF, f_interface: RationalTF,
                 tau1_s: float, tau2_s: float) -> RationalTF:
    """Loop ratio z_s * f_interface * exp(-s*(tau1+tau2)) / z_l."""
    t = tf_ratio(tf_series(z_s, f_interface), z_l)
    return t.with_delay(t.delay_s + tau1_s + tau2_s)


def parallel_load_impedance(impedances: Sequence[RationalTF]) -> RationalTF:
    """Combine load impedances in parallel: 1/Z = sum(1/Z_k), rationally."""
    zs = list(impedances)
    if not zs:
        raise ValueError("need at least one impedance")
    for z in zs:
        if z.delay_s != 0.0:
            raise ValueError("parallel composition requires delay-free terms")
    if len(zs) == 1:
        return zs[0]
    num = reduce(lambda a, b: npoly.polymul(a, b), (z.num for z in zs))
    den = (0.0,)
    for k, zk in enumerate(zs):
        term = zk.den
        for j, zj in enumerate(zs):
            if j != k:
                term = npoly.polymul(term, zj.num)
        den = npoly.polyadd(den, term)
    scale = max(abs(c) for z in zs for c in z.den) or 1.0
    if all(abs(c) <= 1e-12 * scale for c in np.atleast_1d(den)):
        raise ZeroDenominator("admittances cancel identically")
    return RationalTF(tuple(np.atleast_1d(num)), tuple(np.atleast_1d(den)))


def _interface_tf(cutoff_hz: float) -> RationalTF:
    if math.isinf(cutoff_hz):
        return RationalTF.constant(1.0)
    return RationalTF((1.0,), (1.0, 1.0 / (2.0 * math.pi * cutoff_hz)))


def _load_reduced_params(scenario: "_engine.Scenario", j: int,
                         at_final_power: bool) -> ReducedOrderLoadParams:
    ld = scenario.loads[j]
    p = scenario.final_power(j) if at_final_power else scenario.initial_power(j)
    if isinstance(ld, ReducedOrderLoadParams):
        return ReducedOrderLoadParams(ld.v_nom, ld.eta, p, ld.c_i,
                                      ld.lpf_cutoff_hz)
    return ReducedOrderLoadParams(scenario.nominal_v, ld.eta, p, ld.c_i, 5.0)


def _interp_sampled(fr: FreqResponse, f_grid: np.ndarray) -> np.ndarray:
    """Interpolate a measured response onto a grid: log-magnitude and
    unwrapped phase, both linear in log-frequency."""
    logf = np.log10(fr.freq_hz)
    logm = np.log10(np.abs(fr.values))
    target = np.log10(f_grid)
    mag = 10.0 ** np.interp(target, logf, logm)
    phase = np.interp(target, logf, fr.phase_rad)
    return mag * np.exp(1j * phase)


@dataclass(frozen=True)
class AssessmentBundle:
    """Stability report plus the frequency data it was judged on."""

    report: StabilityReport
    z_source: FreqResponse
    z_load: FreqResponse
    t_open_loop: FreqResponse
    z_load_tf: RationalTF
    z_source_tf: Optional[RationalTF]


def _sampled_open_loop(z_s_meas: FreqResponse, z_l: RationalTF,
                       f_int: RationalTF, tau_s: float,
                       f_min: float, f_max: float, ppd: float) -> FreqResponse:
    f_min = max(f_min, z_s_meas.freq_hz[0])
    f_max = min(f_max, z_s_meas.freq_hz[-1])
    n = max(2, int(math.ceil(math.log10(f_max / f_min) * ppd)) + 1)
    f = np.logspace(math.log10(f_min), math.log10(f_max), n)
    w = 2.0 * math.pi * f
    zs = _interp_sampled(z_s_meas, f)
    zl = np.array([tf_eval(z_l, wi) for wi in w])
    fi = np.array([tf_eval(f_int, wi) for wi in w])
    rational = zs * fi / zl
    phase = np.unwrap(np.angle(rational)) - w * tau_s
    values = rational * np.exp(-1j * w * tau_s)
    return FreqResponse(f, values, phase, np.ones(n, bool), f_min, f_max, ppd)


def _measure_source_impedance(scenario: "_engine.Scenario") -> FreqResponse:
    """Output impedance of a source without a closed form, by perturbation
    at its output port around the scenario's final operating point.

    A dense sub-grid brackets the power-stage resonance (predictable from
    the reactive elements), which a points-per-decade grid coarse enough to
    keep low-frequency measurements affordable would otherwise miss.
    """
    p_total = sum(scenario.final_power(j) for j in range(len(scenario.loads)))
    grid = list(np.logspace(
        math.log10(MEASURE_F_MIN_HZ), math.log10(MEASURE_F_MAX_HZ),
        int(math.ceil(math.log10(
            MEASURE_F_MAX_HZ / MEASURE_F_MIN_HZ) * MEASURE_PPD)) + 1))
    src = scenario.source
    if isinstance(src, BoostParams):
        f_res = (src.v_in / src.v_out_ref) / (
            2.0 * math.pi * math.sqrt(src.l * src.c_o))
        lo, hi = f_res / 3.0, min(f_res * 3.0, MEASURE_F_MAX_HZ)
        n = int(math.ceil(math.log10(hi / lo) * MEASURE_PPD_RESONANCE)) + 1
        grid += list(np.logspace(math.log10(lo), math.log10(hi), n))
    grid = sorted(set(grid))
    return _engine.measure_input_impedance(
        lambda: _engine.build_source_block(scenario.source),
        {"v_dc_V": scenario.nominal_v, "p_ref_W": p_total},
        grid,
        dt=scenario.dt_s,
    )


def assess(scenario: "_engine.Scenario", *,
           f_min_hz: float = DEFAULT_F_MIN_HZ,
           f_max_hz: float = DEFAULT_F_MAX_HZ,
           points_per_decade: float = DEFAULT_PPD,
           use_measured_load_impedance: bool = False,
           at_final_power: bool = True) -> AssessmentBundle:
    """Judge a scenario's interconnection stability in the frequency domain.

    The load impedance is the parallel combination of each load's
    reduced-order input impedance at its scheduled power (the final
    scheduled level by default).  An LC source contributes its closed-form
    output impedance; a boost source is measured by perturbation and handled
    as a sampled response, restricted to the measured span.  On an ambiguous
    critical-point crossing the grid is refined once by 4x.
    """
    z_loads = [reduced_order_impedance(_load_reduced_params(
        scenario, j, at_final_power)) for j in range(len(scenario.loads))]
    if use_measured_load_impedance:
        return _assess_measured_loads(scenario, f_min_hz, f_max_hz,
                                      points_per_decade)
    z_l = parallel_load_impedance(z_loads)
    f_int = _interface_tf(scenario.interface_cutoff_hz)
    tau = scenario.tau1_s + scenario.tau2_s

    if isinstance(scenario.source, LcFilterParams):
        z_s_tf: Optional[RationalTF] = lc_output_impedance(scenario.source)
        t_tf = open_loop_tf(z_s_tf, z_l, f_int, scenario.tau1_s,
                            scenario.tau2_s)
        ppd = points_per_decade
        while True:
            t_fr = freq_sweep(t_tf, f_min_hz, f_max_hz, ppd)
            try:
                report = margins(t_fr)
                break
            except AmbiguousCrossing:
                if ppd > points_per_decade * REFINE_FACTOR ** 2:
                    raise
                ppd *= REFINE_FACTOR
        z_s_fr = freq_sweep(z_s_tf, f_min_hz, f_max_hz, points_per_decade)
    else:
        z_s_tf = None
        z_s_meas = _measure_source_impedance(scenario)
        ppd = points_per_decade
        while True:
            t_fr = _sampled_open_loop(z_s_meas, z_l, f_int, tau,
                                      f_min_hz, f_max_hz, ppd)
            try:
                report = margins(t_fr)
                break
            except AmbiguousCrossing:
                if ppd > points_per_decade * REFINE_FACTOR ** 2:
                    raise
                ppd *= REFINE_FACTOR
        z_s_fr = z_s_meas
    z_l_fr = freq_sweep(z_l, f_min_hz, f_max_hz, points_per_decade)
    return AssessmentBundle(report, z_s_fr, z_l_fr, t_fr, z_l, z_s_tf)


def _assess_measured_loads(scenario, f_min_hz, f_max_hz, ppd):
    """Comparison path: measure each load block's input impedance instead of
    using the closed form, then run the same machinery on samples."""
    grid = np.logspace(math.log10(max(f_min_hz, MEASURE_F_MIN_HZ)),
                       math.log10(min(f_max_hz, MEASURE_F_MAX_HZ)),
                       25)
    v_nom = scenario.nominal_v
    y_total = None
    f_meas = None
    for j, _ in enumerate(scenario.loads):
        p_j = scenario.final_power(j)
        fr = _engine.measure_input_impedance(
            lambda j=j: _engine.build_load_block(scenario.loads[j]),
            {"v_dc_V": v_nom, "p_ref_W": p_j},
            grid,
            dt=scenario.dt_s,
        )
        y = 1.0 / fr.values
        y_total = y if y_total is None else y_total + y
        f_meas = fr.freq_hz
    z_l_fr = FreqResponse.from_samples(f_meas, 1.0 / y_total)
    f_int = _interface_tf(scenario.interface_cutoff_hz)
    tau = scenario.tau1_s + scenario.tau2_s
    if isinstance(scenario.source, LcFilterParams):
        z_s_tf = lc_output_impedance(scenario.source)
        w = 2.0 * math.pi * f_meas
        zs_vals = np.array([tf_eval(z_s_tf, wi) for wi in w])
        z_s_fr = FreqResponse.from_samples(f_meas, zs_vals)
    else:
        z_s_tf = None
        z_s_fr = _measure_source_impedance(scenario)
        zs_vals = _interp_sampled(z_s_fr, f_meas)
    w = 2.0 * math.pi * f_meas
    fi = np.array([tf_eval(f_int, wi) for wi in w])
    rational = zs_vals * fi / z_l_fr.values
    phase = np.unwrap(np.angle(rational)) - w * tau
    t_fr = FreqResponse(f_meas, rational * np.exp(-1j * w * tau), phase,
                        np.ones(len(f_meas), bool),
                        float(f_meas[0]), float(f_meas[-1]))
    report = margins(t_fr)
    return AssessmentBundle(report, z_s_fr, z_l_fr, t_fr,
                            RationalTF.constant(1.0), z_s_tf)


def write_report_txt(report: StabilityReport, path) -> None:
    """Human-readable key: value lines."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key, val in report.as_kv().items():
            fh.write(f"{key}: {val}\n")


def write_report_kv(report: StabilityReport, path) -> None:
    """Flat machine-readable key=value file."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key, val in report.as_kv().items():
            fh.write(f"{key}={val}\n")
