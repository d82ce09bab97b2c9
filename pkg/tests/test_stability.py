import math

import numpy as np
import pytest

from philab.blocks import (
    LcFilterParams,
    ReducedOrderLoadParams,
    lc_output_impedance,
    reduced_order_impedance,
)
from philab.engine import PhilEngine, classify_trace
from philab.errors import ZeroDenominator
from philab.freqdomain import (
    RationalTF,
    Verdict,
    freq_sweep,
    margins,
    nyquist_encirclements,
    tf_eval,
)
from philab.stability import (
    assess,
    open_loop_tf,
    parallel_load_impedance,
    write_report_kv,
    write_report_txt,
)

from conftest import C_I, V_BUS, make_scenario

OMEGAS = [1.0, 100.0, 6283.0, 62830.0, 6.28e5]


def eq2(p_o, c_i=C_I, v=V_BUS):
    return reduced_order_impedance(
        ReducedOrderLoadParams(v, 1.0, p_o, c_i, 5.0))


# --- open_loop_tf -------------------------------------------------------------

def test_degenerate_interface_reduces_to_plain_ratio(lc_params):
    z_s = lc_output_impedance(lc_params)
    z_l = eq2(40e3)
    t = open_loop_tf(z_s, z_l, RationalTF.constant(1.0), 0.0, 0.0)
    for w in OMEGAS:
        assert tf_eval(t, w) == pytest.approx(
            tf_eval(z_s, w) / tf_eval(z_l, w), rel=1e-12)
    assert t.delay_s == 0.0


def test_open_loop_attaches_loop_delay(lc_params):
    z_s = lc_output_impedance(lc_params)
    f = RationalTF((1.0,), (1.0, 1.0 / (2 * math.pi * 15e3)))
    t = open_loop_tf(z_s, eq2(40e3), f, 5e-6, 5e-6)
    assert t.delay_s == pytest.approx(10e-6)


# --- parallel composition --------------------------------------------------------

def test_parallel_identical_halves(lc_params):
    z = eq2(40e3)
    zp = parallel_load_impedance([z, z])
    for w in OMEGAS:
        assert tf_eval(zp, w) == pytest.approx(tf_eval(z, w) / 2.0, rel=1e-9)


def test_parallel_single_is_identity():
    z = eq2(40e3)
    assert parallel_load_impedance([z]) is z


def test_parallel_two_40kw_equals_one_80kw_with_doubled_capacitance():
    # algebraic identity of the first-order input-impedance model
    z40 = eq2(40e3)
    zp = parallel_load_impedance([z40, z40])
    z80 = eq2(80e3, c_i=2 * C_I)
    for w in OMEGAS:
        assert tf_eval(zp, w) == pytest.approx(tf_eval(z80, w), rel=1e-9)


def test_parallel_cancellation_rejected():
    z = RationalTF((11.56,), (1.0, 11.56 * C_I))
    z_neg = RationalTF((-11.56,), (1.0, 11.56 * C_I))
    with pytest.raises(ZeroDenominator):
        parallel_load_impedance([z, z_neg])


def test_parallel_rejects_delayed_terms():
    with pytest.raises(ValueError):
        parallel_load_impedance([RationalTF((1.0,), (1.0,), 1e-6)])


# --- assess on the reference system ------------------------------------------------

def test_assess_40kw_stable(lc_params, inverter_params_40kw):
    sc = make_scenario(lc_params, [inverter_params_40kw], t_end=0.2)
    bundle = assess(sc)
    assert bundle.report.verdict is Verdict.STABLE
    assert bundle.report.encirclements == 0
    assert bundle.report.gain_margin_db > 0
    assert bundle.report.phase_margin_deg > 0


def test_assess_80kw_unstable(lc_params, inverter_params_40kw):
    sc = make_scenario(lc_params, [inverter_params_40kw], t_end=0.2,
                       schedule=[(0.05, 0, 80e3)])
    bundle = assess(sc)  # judges the final scheduled power
    assert bundle.report.verdict is Verdict.UNSTABLE
    assert bundle.report.encirclements != 0
    bundle_initial = assess(sc, at_final_power=False)
    assert bundle_initial.report.verdict is Verdict.STABLE


def test_assess_bundle_contains_frequency_data(scenario_40kw):
    bundle = assess(scenario_40kw)
    assert len(bundle.z_source.freq_hz) == len(bundle.z_load.freq_hz)
    assert bundle.t_open_loop.freq_hz[0] == pytest.approx(1.0)
    assert bundle.t_open_loop.freq_hz[-1] == pytest.approx(1e6)
    # T = Z_s*F*delay/Z_l pointwise
    k = len(bundle.t_open_loop.freq_hz) // 2
    w = 2 * math.pi * bundle.t_open_loop.freq_hz[k]
    z_s = tf_eval(bundle.z_source_tf, w) if bundle.z_source_tf else None
    z_l = tf_eval(bundle.z_load_tf, w)
    f_int = 1.0 / (1.0 + 1j * w / (2 * math.pi * 15e3))
    expected = z_s * f_int * np.exp(-1j * w * 10e-6) / z_l
    assert bundle.t_open_loop.values[k] == pytest.approx(expected, rel=1e-9)


# --- spec invariants ---------------------------------------------------------------

def test_verdict_invariant_to_uniform_scaling(lc_params):
    z_s = lc_output_impedance(lc_params)
    z_l = eq2(80e3)
    f = RationalTF((1.0,), (1.0, 1.0 / (2 * math.pi * 15e3)))
    scale = 3.7
    z_s2 = RationalTF(tuple(scale * c for c in z_s.num), z_s.den)
    z_l2 = RationalTF(tuple(scale * c for c in z_l.num), z_l.den)
    t1 = open_loop_tf(z_s, z_l, f, 5e-6, 5e-6)
    t2 = open_loop_tf(z_s2, z_l2, f, 5e-6, 5e-6)
    for w in OMEGAS:
        assert tf_eval(t1, w) == pytest.approx(tf_eval(t2, w), rel=1e-12)
    fr1 = freq_sweep(t1, 1.0, 1e6, 200)
    fr2 = freq_sweep(t2, 1.0, 1e6, 200)
    r1, r2 = margins(fr1), margins(fr2)
    assert r1.verdict == r2.verdict
    assert nyquist_encirclements(fr1) == nyquist_encirclements(fr2)
    assert r1.gain_margin_db == pytest.approx(r2.gain_margin_db, abs=1e-9)


def test_exactly_one_transition_across_power_sweep(lc_params,
                                                   inverter_params_40kw):
    verdicts = []
    for p in (40e3, 50e3, 60e3, 70e3, 80e3):
        sc = make_scenario(lc_params, [inverter_params_40kw], t_end=0.2,
                           schedule=[(0.0, 0, p)])
        verdicts.append(assess(sc).report.verdict is Verdict.STABLE)
    flips = sum(a != b for a, b in zip(verdicts, verdicts[1:]))
    assert verdicts[0] is True
    assert verdicts[-1] is False
    assert flips == 1


def test_winding_count_is_grid_refinement_stable(lc_params,
                                                 inverter_params_40kw):
    for p in (40e3, 80e3):
        sc = make_scenario(lc_params, [inverter_params_40kw], t_end=0.2,
                           schedule=[(0.0, 0, p)])
        enc = [assess(sc, points_per_decade=ppd).report.encirclements
               for ppd in (200, 400)]
        assert enc[0] == enc[1]


def test_assess_agrees_with_trace_classification(lc_params,
                                                 inverter_params_40kw):
    for p in (40e3, 80e3):
        sc = make_scenario(lc_params, [inverter_params_40kw], t_end=0.1,
                           schedule=[(0.02, 0, p)])
        verdict_stable = assess(sc).report.verdict is Verdict.STABLE
        cls = classify_trace(PhilEngine(sc).run(), V_BUS)
        assert verdict_stable == cls.stable


def test_assess_with_measured_load_impedance(lc_params, reduced_params_40kw):
    sc = make_scenario(lc_params, [reduced_params_40kw], t_end=0.2)
    bundle = assess(sc, use_measured_load_impedance=True)
    assert bundle.report.verdict is Verdict.STABLE


def test_assess_near_critical_power_is_marginal(lc_params,
                                                inverter_params_40kw):
    # around 50.5 kW the locus passes essentially through the critical
    # point; the report must flag the proximity instead of guessing a side
    sc = make_scenario(lc_params, [inverter_params_40kw], t_end=0.2,
                       schedule=[(0.0, 0, 50.5e3)])
    report = assess(sc).report
    assert report.min_distance_to_critical < 0.02
    assert report.verdict is Verdict.MARGINAL
    assert report.encirclements is None


def test_assess_refines_then_reraises_ambiguous(monkeypatch, lc_params,
                                                inverter_params_40kw):
    # force the ambiguity band wide enough that refinement cannot resolve
    # it: assess must retry with denser grids, then surface the error
    import philab.freqdomain as fd
    from philab.errors import AmbiguousCrossing

    monkeypatch.setattr(fd, "AMBIGUOUS_EPS", 0.6)
    sc = make_scenario(lc_params, [inverter_params_40kw], t_end=0.2,
                       schedule=[(0.0, 0, 80e3)])
    with pytest.raises(AmbiguousCrossing):
        assess(sc)


# --- report emission ------------------------------------------------------------

def test_report_files(tmp_path, scenario_40kw):
    report = assess(scenario_40kw).report
    txt = tmp_path / "report.txt"
    kv = tmp_path / "report.kv"
    write_report_txt(report, txt)
    write_report_kv(report, kv)
    txt_lines = txt.read_text().splitlines()
    kv_lines = kv.read_text().splitlines()
    assert "verdict: Stable" in txt_lines
    assert "verdict=Stable" in kv_lines
    assert any(line.startswith("gain_margin_db=") for line in kv_lines)
    assert len(txt_lines) == len(kv_lines)
