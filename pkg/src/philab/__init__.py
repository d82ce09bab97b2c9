"""DC-bus stability workbench.

Frequency-domain impedance-ratio analysis, fixed-step simulation of the
source/load interconnection loop, perturbation-based impedance measurement,
and per-step execution-cost benchmarking of converter load models.
"""

from .blocks import (
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
from .engine import (
    PhilEngine,
    Scenario,
    Trace,
    build_phil_loop,
    classify_trace,
    measure_input_impedance,
    run,
    swap_loads_reduced,
)
from .freqdomain import (
    FreqResponse,
    RationalTF,
    StabilityReport,
    Verdict,
    freq_sweep,
    margins,
    nyquist_encirclements,
    tf_eval,
    tf_ratio,
    tf_series,
    write_freq_response_csv,
)
from .stability import assess, open_loop_tf, parallel_load_impedance
from .bench import SpeedupReport, TimingStats, compare, time_per_step
from .scenario_io import emit_scenario, parse_scenario

__version__ = "0.1.0"
