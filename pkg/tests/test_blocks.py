import math

import numpy as np
import pytest

from philab.blocks import (
    AvgInverter,
    AvgInverterParams,
    BoostConverter,
    BoostParams,
    DelayLine,
    FirstOrderLpf,
    LcFilter,
    LcFilterParams,
    RcParallelBranch,
    ReducedOrderLoad,
    ReducedOrderLoadParams,
    cpl_resistance,
    lc_output_impedance,
    load_resistance,
    reduced_order_impedance,
)
from philab.errors import ConfigError, DomainError
from philab.freqdomain import tf_eval

from conftest import C_F, C_I, DT, L_F, R_F, V_BUS, block_freq_response, db, wrap_deg


# --- closed-form resistances ------------------------------------------------

@pytest.mark.parametrize("v,eta,p,expected", [
    (680.0, 1.0, 40e3, -11.56),
    (680.0, 1.0, 80e3, -5.78),
    (25.0, 1.0, 4.0, -156.25),
])
def test_cpl_resistance_reference_points(v, eta, p, expected):
    assert cpl_resistance(v, eta, p) == pytest.approx(expected, rel=1e-9)


@pytest.mark.parametrize("v,eta,p,expected", [
    (680.0, 1.0, 40e3, 11.56),
    (25.0, 1.0, 4.0, 156.25),
    (1.0, 1.0, 1.0, 1.0),
])
def test_load_resistance_reference_points(v, eta, p, expected):
    assert load_resistance(v, eta, p) == pytest.approx(expected, rel=1e-9)


@pytest.mark.parametrize("v,p", [(0.0, 1.0), (-5.0, 1.0), (1.0, 0.0), (1.0, -2.0)])
def test_resistance_domain_errors(v, p):
    with pytest.raises(DomainError):
        cpl_resistance(v, 1.0, p)
    with pytest.raises(DomainError):
        load_resistance(v, 1.0, p)


def test_cpl_is_negated_load_resistance():
    rng = np.random.default_rng(7)
    for _ in range(50):
        v = rng.uniform(1.0, 1e3)
        eta = rng.uniform(0.1, 1.0)
        p = rng.uniform(0.1, 1e5)
        assert cpl_resistance(v, eta, p) == -load_resistance(v, eta, p)


# --- closed-form impedances ---------------------------------------------------

def test_reduced_order_impedance_shape():
    params = ReducedOrderLoadParams(680.0, 1.0, 40e3, C_I, 5.0)
    z = reduced_order_impedance(params)
    assert tf_eval(z, 1e-6) == pytest.approx(-11.56, abs=1e-6)
    # corner where |Z| = |R|/sqrt(2): 1/(2*pi*|R|*C)
    f_c = 1.0 / (2 * math.pi * 11.56 * C_I)
    assert f_c == pytest.approx(13.768e3, rel=1e-3)
    assert abs(tf_eval(z, 2 * math.pi * f_c)) == pytest.approx(
        11.56 / math.sqrt(2), rel=1e-9)
    # oracle: grid search for the knee (max deviation from the asymptotes)
    f = np.logspace(2, 6, 2000)
    mag = np.abs([tf_eval(z, 2 * math.pi * fi) for fi in f])
    asym = np.minimum(11.56, 1.0 / (2 * math.pi * f * C_I))
    knee = f[np.argmax(np.abs(np.log(mag / asym)))]
    assert knee == pytest.approx(f_c, rel=0.02)
    # capacitive limit keeps the negative-resistance signature
    v_hf = tf_eval(z, 2 * math.pi * 1e7)
    assert math.degrees(math.atan2(v_hf.imag, v_hf.real)) == pytest.approx(-90.0, abs=0.5)
    assert v_hf.real < 0.0


def test_lc_output_impedance_limits(lc_params):
    z = lc_output_impedance(lc_params)
    assert tf_eval(z, 1e-9) == pytest.approx(R_F, abs=1e-9)
    f_res = 1.0 / (2 * math.pi * math.sqrt(L_F * C_F))
    f = np.logspace(2, 4, 3000)
    mag = np.abs([tf_eval(z, 2 * math.pi * fi) for fi in f])
    assert f[np.argmax(mag)] == pytest.approx(f_res, rel=5e-3)
    w_hi = 2 * math.pi * 5e6
    assert abs(tf_eval(z, w_hi)) == pytest.approx(1.0 / (w_hi * C_F), rel=1e-2)


# --- first-order low pass ------------------------------------------------------

def test_lpf_dc_gain_exact():
    lpf = FirstOrderLpf(5.0)
    lpf.init_dc(0.0)
    y = 0.0
    for _ in range(2_000_000):
        y = lpf.step(5.0, DT)
        if abs(y - 5.0) < 1e-12:
            break
    assert y == pytest.approx(5.0, abs=1e-12)


def test_lpf_corner_response():
    lpf = FirstOrderLpf(1000.0)
    h = block_freq_response(lpf, 1000.0, DT, bias=0.0, amp=1.0)
    assert abs(h) == pytest.approx(1.0 / math.sqrt(2), rel=1e-3)
    assert math.degrees(math.atan2(h.imag, h.real)) == pytest.approx(-45.0, abs=0.1)


def test_lpf_step_time_constant():
    # 5 Hz cutoff: 63.2% of a step at t = 1/(2*pi*5) ~ 31.8 ms
    lpf = FirstOrderLpf(5.0)
    lpf.init_dc(0.0)
    tau = 1.0 / (2 * math.pi * 5.0)
    n_tau = round(tau / DT)
    y = 0.0
    for _ in range(n_tau):
        y = lpf.step(1.0, DT)
    assert y == pytest.approx(1.0 - math.exp(-1.0), abs=2e-4)


def test_lpf_bypass_mode():
    lpf = FirstOrderLpf(math.inf)
    assert lpf.step(3.7, DT) == 3.7


# --- delay line -----------------------------------------------------------------

def test_delay_line_exact_shift():
    line = DelayLine(5e-6, 1e-6)
    rng = np.random.default_rng(3)
    seq = rng.standard_normal(200)
    out = [line.step(u, 1e-6) for u in seq]
    assert out[:5] == [0.0] * 5
    assert out[5:] == list(seq[:-5])  # bitwise equality


def test_delay_line_zero_is_passthrough():
    line = DelayLine(0.0, 1e-6)
    assert line.step(1.234, 1e-6) == 1.234


def test_delay_line_non_integer_ratio_rejected():
    with pytest.raises(ConfigError):
        DelayLine(5e-6, 2e-6)


# --- resistor-capacitor branch -----------------------------------------------

@pytest.mark.parametrize("f_hz", [500.0, 5000.0, 25000.0])
def test_rc_branch_matches_admittance(f_hz):
    r = -11.56
    branch = RcParallelBranch(r, C_I)
    branch.init_dc(0.0)
    h = block_freq_response(branch, f_hz, DT, bias=0.0, amp=1.0)
    w = 2 * math.pi * f_hz
    expected = 1.0 / r + 1j * w * C_I
    assert abs(h / expected) == pytest.approx(1.0, abs=0.01)
    assert wrap_deg(math.degrees(np.angle(h / expected))) == pytest.approx(0.0, abs=1.0)


# --- LC filter block ------------------------------------------------------------

def test_lc_filter_no_load_steady_state(lc_params):
    blk = LcFilter(lc_params)
    blk.init_dc(0.0)
    for _ in range(1000):
        v = blk.step(0.0, DT)
    assert v == pytest.approx(V_BUS, abs=1e-9)


def test_lc_filter_dc_drop(lc_params):
    i = 40e3 / V_BUS  # 58.824 A
    blk = LcFilter(lc_params)
    blk.init_dc(i)
    for _ in range(1000):
        v = blk.step(i, DT)
    assert v == pytest.approx(V_BUS - R_F * i, abs=1e-6)
    assert v == pytest.approx(674.12, abs=0.01)


def test_lc_filter_step_rings_at_eigenfrequency(lc_params):
    # oracle: eigenvalues of [[-R/L, -1/L], [1/C, 0]]
    a = np.array([[-R_F / L_F, -1.0 / L_F], [1.0 / C_F, 0.0]])
    eig = np.linalg.eigvals(a)
    f_ring = abs(eig.imag).max() / (2 * math.pi)
    blk = LcFilter(lc_params)
    blk.init_dc(0.0)
    n = 4000
    v = np.array([blk.step(10.0, DT) for _ in range(n)])
    x = v - (V_BUS - R_F * 10.0)  # exact DC endpoint
    ups = np.flatnonzero((x[:-1] < 0) & (x[1:] >= 0))
    periods = np.diff(ups) * DT
    assert 1.0 / periods.mean() == pytest.approx(f_ring, rel=0.01)
    # damping set by R_f: amplitude ratio over one period ~ exp(-R/(2L)*T)
    ratio = np.exp(-R_F / (2 * L_F) / f_ring)
    seg1 = np.abs(x[ups[0]:ups[1]]).max()
    seg2 = np.abs(x[ups[1]:ups[2]]).max()
    assert seg2 / seg1 == pytest.approx(ratio, rel=0.05)


@pytest.mark.parametrize("f_hz", [500.0, 5000.0, 25000.0])
def test_lc_filter_discretization_matches_tf(lc_params, f_hz):
    # v response to drawn-current injection is -Z_out
    z = lc_output_impedance(lc_params)
    blk = LcFilter(lc_params)
    blk.init_dc(10.0)
    h = block_freq_response(blk, f_hz, DT, bias=10.0, amp=0.5)
    expected = -tf_eval(z, 2 * math.pi * f_hz)
    assert abs(h / expected) == pytest.approx(1.0, abs=0.01)
    assert wrap_deg(math.degrees(np.angle(h / expected))) == pytest.approx(0.0, abs=1.0)


# --- reduced-order load ----------------------------------------------------------

def test_reduced_load_settles_to_power_balance(reduced_params_40kw):
    blk = ReducedOrderLoad(reduced_params_40kw)
    blk.init_dc(V_BUS)
    for _ in range(200_000):
        i = blk.step(V_BUS, DT)
    assert i == pytest.approx(40e3 / V_BUS, rel=1e-6)
    assert V_BUS * i == pytest.approx(40e3, rel=1e-3)  # p_o/eta within 0.1%


def test_reduced_load_small_signal_branch_matches_model(reduced_params_40kw):
    blk = ReducedOrderLoad(reduced_params_40kw)
    blk.init_dc(V_BUS)
    z = reduced_order_impedance(reduced_params_40kw)
    f = 1000.0
    h = block_freq_response(blk, f, DT, bias=V_BUS, amp=1.0,
                            extra_settle_s=5 * blk.settle_hint_s)
    expected = 1.0 / tf_eval(z, 2 * math.pi * f)  # admittance
    assert abs(h / expected) == pytest.approx(1.0, abs=0.02)
    assert wrap_deg(math.degrees(np.angle(h / expected))) == pytest.approx(0.0, abs=2.0)


def test_reduced_load_rejects_zero_power(reduced_params_40kw):
    with pytest.raises(DomainError):
        ReducedOrderLoadParams(680.0, 1.0, 0.0, C_I, 5.0)
    blk = ReducedOrderLoad(reduced_params_40kw)
    with pytest.raises(DomainError):
        blk.set_power(0.0)


def test_reduced_load_power_reschedule(reduced_params_40kw):
    blk = ReducedOrderLoad(reduced_params_40kw)
    blk.set_power(80e3)
    assert blk.r_load == pytest.approx(5.78, rel=1e-9)
    assert blk.r_cpl == pytest.approx(-5.78, rel=1e-9)
    assert blk.p_ref == 80e3


# --- averaged inverter -----------------------------------------------------------

def test_inverter_steady_dc_current(inverter_params_40kw):
    blk = AvgInverter(inverter_params_40kw)
    blk.init_dc(V_BUS)
    n = 100_000
    tail = np.array([blk.step(V_BUS, DT) for _ in range(n)])[-20_000:]
    assert tail.mean() == pytest.approx(40e3 / V_BUS, rel=1e-4)


def test_inverter_zero_power(inverter_params_40kw):
    blk = AvgInverter(inverter_params_40kw)
    blk.init_dc(V_BUS)
    blk.set_power(0.0)
    tail = [blk.step(V_BUS, DT) for _ in range(100_000)][-1000:]
    assert abs(np.mean(tail)) < 0.05


@pytest.mark.parametrize("p_ref", [40e3, 80e3])
def test_inverter_standalone_stability(p_ref):
    # fed from an ideal 680 V source, the trace stays bounded
    blk = AvgInverter(AvgInverterParams(c_i=C_I, l_o=510e-6, r_o=0.07,
                                        p_ref=p_ref))
    blk.init_dc(V_BUS)
    out = np.array([blk.step(V_BUS, DT) for _ in range(100_000)])
    assert np.all(np.isfinite(out))
    assert np.abs(out).max() < 1000.0
    assert out[-1] == pytest.approx(p_ref / V_BUS, rel=1e-3)


def test_inverter_low_voltage_flag(inverter_params_40kw):
    blk = AvgInverter(inverter_params_40kw)
    blk.init_dc(V_BUS)
    v_low = 200.0  # below the grid peak line-to-neutral of ~310 V
    i = blk.step(v_low, DT)
    assert blk.saturated
    assert math.isfinite(i)


# --- boost converter --------------------------------------------------------------

def test_boost_no_load_regulation(boost_params):
    blk = BoostConverter(boost_params)
    blk.init_dc(0.0)
    for _ in range(100_000):
        v = blk.step(0.0, DT)
    assert v == pytest.approx(boost_params.v_out_ref, rel=1e-4)
    assert not blk.saturated


def test_boost_duty_clamp_flagged():
    p = BoostParams(l=50e-6, r_l=1e-9, c_o=47e-6, r_co=10e-3,
                    v_in=20.0, v_out_ref=680.0, kp=1e-4, ki=0.3)
    blk = BoostConverter(p)  # demands 1 - 20/680 = 0.971 > 0.95
    blk.init_dc(0.0)
    for _ in range(200_000):
        v = blk.step(0.0, DT)
    assert blk.saturated
    assert math.isfinite(v)


def test_boost_output_impedance_falls_with_gain(boost_params):
    from philab.engine import measure_input_impedance

    def z_at_10hz(ki):
        p = BoostParams(l=50e-6, r_l=1e-9, c_o=47e-6, r_co=10e-3,
                        v_in=400.0, v_out_ref=V_BUS, kp=1e-4, ki=ki,
                        k_damp=2.5e-4)
        fr = measure_input_impedance(lambda: BoostConverter(p),
                                     {"v_dc_V": V_BUS, "p_ref_W": 14e3},
                                     [10.0], dt=DT)
        return abs(fr.values[0])

    z_soft = z_at_10hz(0.15)
    z_stiff = z_at_10hz(0.6)
    assert math.isfinite(z_soft) and z_soft > 0
    assert z_stiff < z_soft


def test_boost_requires_step_up():
    with pytest.raises(DomainError):
        BoostParams(l=50e-6, r_l=1e-9, c_o=47e-6, r_co=10e-3,
                    v_in=700.0, v_out_ref=680.0, kp=1e-4, ki=0.3)


# --- determinism ------------------------------------------------------------------

@pytest.mark.parametrize("make", [
    lambda: FirstOrderLpf(5.0),
    lambda: DelayLine(5e-6, 1e-6),
    lambda: ReducedOrderLoad(ReducedOrderLoadParams(680.0, 1.0, 40e3, C_I, 5.0)),
    lambda: AvgInverter(AvgInverterParams(c_i=C_I, l_o=510e-6, r_o=0.07, p_ref=40e3)),
])
def test_block_step_is_deterministic(make):
    rng = np.random.default_rng(11)
    drive = 680.0 + rng.standard_normal(500)
    outs = []
    for _ in range(2):
        blk = make()
        if hasattr(blk, "init_dc"):
            blk.init_dc(680.0)
        outs.append([blk.step(u, DT) for u in drive])
    assert outs[0] == outs[1]
