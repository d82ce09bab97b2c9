import math

import pytest

from philab.blocks import (
    AvgInverterParams,
    BoostParams,
    LcFilterParams,
    ReducedOrderLoadParams,
)
from philab.engine import Scenario

# Bench parameters of the reference system: 680 V bus behind a 100 uH /
# 0.1 Ohm / 0.1 mF filter, inverter with 1 uF input capacitance and a
# 510 uH / 0.07 Ohm output filter, 5 us loop delays, 15 kHz interface.
V_BUS = 680.0
L_F = 100e-6
R_F = 0.1
C_F = 0.1e-3
C_I = 1e-6
L_O = 510e-6
R_O = 0.07
TAU = 5e-6
F_INTERFACE_HZ = 15e3
DT = 1e-6


@pytest.fixture
def lc_params():
    return LcFilterParams(v_source=V_BUS, l_f=L_F, r_f=R_F, c_f=C_F)


@pytest.fixture
def inverter_params_40kw():
    return AvgInverterParams(c_i=C_I, l_o=L_O, r_o=R_O, p_ref=40e3)


@pytest.fixture
def reduced_params_40kw():
    return ReducedOrderLoadParams(v_nom=V_BUS, eta=1.0, p_o=40e3, c_i=C_I,
                                  lpf_cutoff_hz=5.0)


@pytest.fixture
def boost_params():
    return BoostParams(l=50e-6, r_l=1e-9, c_o=47e-6, r_co=10e-3,
                       v_in=400.0, v_out_ref=V_BUS, kp=1e-4, ki=0.3,
                       k_damp=2.5e-4)


def make_scenario(source, loads, t_end=0.05, schedule=(), dt=DT,
                  tau1=TAU, tau2=TAU, cutoff=F_INTERFACE_HZ):
    return Scenario(
        source=source,
        loads=tuple(loads),
        tau1_s=tau1,
        tau2_s=tau2,
        interface_cutoff_hz=cutoff,
        dt_s=dt,
        t_end_s=t_end,
        schedule=tuple(schedule),
    )


@pytest.fixture
def scenario_40kw(lc_params, inverter_params_40kw):
    return make_scenario(lc_params, [inverter_params_40kw])


def wrap_deg(x):
    """Wrap an angle difference into (-180, 180]."""
    return ((x + 180.0) % 360.0) - 180.0


def db(x):
    return 20.0 * math.log10(abs(x))


def block_freq_response(block, f_hz, dt, bias, amp, settle_cycles=20,
                        extra_settle_s=0.0):
    """Measured small-signal response (output phasor / input phasor) of one
    block at a single frequency, by sine injection and two-cycle single-bin
    correlation (an even window rejects the trapezoidal alternating mode)."""
    n = round(1.0 / (f_hz * dt))
    sin_t = [math.sin(2 * math.pi * k / n) for k in range(n)]
    cos_t = [math.cos(2 * math.pi * k / n) for k in range(n)]
    settle = n * math.ceil((settle_cycles / (f_hz * dt) * dt + extra_settle_s)
                           / (n * dt))
    n_ramp = max(n, settle // 4)
    k_mod = 0
    for k in range(settle):
        env = 0.5 * (1 - math.cos(math.pi * k / n_ramp)) if k < n_ramp else 1.0
        block.step(bias + env * amp * sin_t[k_mod], dt)
        k_mod = (k_mod + 1) % n
    su = sy = 0j
    for _ in range(2):
        for k in range(n):
            u = bias + amp * sin_t[k]
            y = block.step(u, dt)
            su += u * complex(cos_t[k], -sin_t[k])
            sy += y * complex(cos_t[k], -sin_t[k])
    return sy / su
