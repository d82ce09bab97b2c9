"""Wall-clock per-step cost of the simulation loop.

Medians over repeated single-threaded runs, with a discarded warm-up run and
garbage collection paused, so the reported figure is the loop's arithmetic
cost rather than allocator or scheduler noise.  Trace recording is disabled
while timing; the loop body is numerically identical either way.
"""

from __future__ import annotations

import gc
import math
import statistics
import time
from dataclasses import dataclass

from .blocks import AvgInverterParams, ReducedOrderLoadParams
from .engine import PhilEngine, Scenario
from .errors import ConfigMismatch

__all__ = ["TimingStats", "SpeedupReport", "time_per_step", "compare"]

MIN_STEPS = 100_000
MIN_REPEATS = 5


def _pin_to_one_cpu():
    try:
        import psutil

        proc = psutil.Process()
        cpus = proc.cpu_affinity()
        if cpus and len(cpus) > 1:
            proc.cpu_affinity([cpus[0]])
        return proc, cpus
    except Exception:
        return None, None


def _restore_affinity(proc, cpus):
    if proc is not None and cpus:
        try:
            proc.cpu_affinity(cpus)
        except Exception:
            pass


def model_label(scenario: Scenario) -> str:
    kinds = set()
    for ld in scenario.loads:
        if isinstance(ld, AvgInverterParams):
            kinds.add("avg_inverter")
        elif isinstance(ld, ReducedOrderLoadParams):
            kinds.add("reduced_order")
    return kinds.pop() if len(kinds) == 1 else "mixed"


@dataclass(frozen=True)
class TimingStats:
    median_ns_per_step: float
    p95_ns_per_step: float
    total_s: float
    n_steps: int
    n_repeats: int

    def as_kv(self) -> dict:
        return {
            "median_ns_per_step": self.median_ns_per_step,
            "p95_ns_per_step": self.p95_ns_per_step,
            "total_s": self.total_s,
            "n_steps": self.n_steps,
            "n_repeats": self.n_repeats,
        }


@dataclass(frozen=True)
class SpeedupReport:
    model_a: str
    model_b: str
    n_loads: int
    dt_s: float
    median_a_ns: float
    median_b_ns: float
    ratio: float
    stats_a: TimingStats
    stats_b: TimingStats

    def as_kv(self) -> dict:
        return {
            "model_a": self.model_a,
            "model_b": self.model_b,
            "n_loads": self.n_loads,
            "dt_s": self.dt_s,
            "median_a_ns": self.median_a_ns,
            "median_b_ns": self.median_b_ns,
            "ratio": self.ratio,
        }

    def csv_row(self) -> str:
        return (f"{self.model_a},{self.model_b},{self.n_loads},{self.dt_s!r},"
                f"{self.median_a_ns!r},{self.median_b_ns!r},{self.ratio!r}")

    CSV_HEADER = "model_a,model_b,n_loads,dt_s,median_a_ns,median_b_ns,ratio"


def time_per_step(scenario: Scenario, n_steps: int = MIN_STEPS,
                  n_repeats: int = MIN_REPEATS) -> TimingStats:
    """Median wall-clock nanoseconds per simulation step.

    Each repeat rebuilds the engine so every run does identical work; the
    first (warm-up) run is excluded.  Requires n_steps >= 1e5 and
    n_repeats >= 5 so the medians mean something.
    """
    if n_steps < MIN_STEPS:
        raise ValueError(f"n_steps must be >= {MIN_STEPS}")
    if n_repeats < MIN_REPEATS:
        raise ValueError(f"n_repeats must be >= {MIN_REPEATS}")
    proc, cpus = _pin_to_one_cpu()
    gc_was_enabled = gc.isenabled()
    gc.disable()
    t_start = time.perf_counter()
    try:
        engine = PhilEngine(scenario)
        engine.run(record=False, n_steps=n_steps)  # warm-up, discarded
        per_step = []
        for _ in range(n_repeats):
            engine = PhilEngine(scenario)
            t0 = time.perf_counter_ns()
            engine.run(record=False, n_steps=n_steps)
            t1 = time.perf_counter_ns()
            per_step.append((t1 - t0) / n_steps)
    finally:
        if gc_was_enabled:
            gc.enable()
        _restore_affinity(proc, cpus)
    total = time.perf_counter() - t_start
    per_step.sort()
    median = statistics.median(per_step)
    # interpolated 95th percentile over the repeat medians
    pos = 0.95 * (len(per_step) - 1)
    lo = math.floor(pos)
    hi = math.ceil(pos)
    p95 = per_step[lo] + (per_step[hi] - per_step[lo]) * (pos - lo)
    return TimingStats(median, p95, total, n_steps, n_repeats)


def compare(scenario_a: Scenario, scenario_b: Scenario,
            n_steps: int = MIN_STEPS, n_repeats: int = MIN_REPEATS) -> SpeedupReport:
    """ratio = median_a / median_b with otherwise identical configs.

    The two scenarios must share dt and the source definition; anything else
    would make the per-step comparison meaningless.
    """
    if scenario_a.dt_s != scenario_b.dt_s:
        raise ConfigMismatch("scenarios differ in dt_s")
    if scenario_a.source != scenario_b.source:
        raise ConfigMismatch("scenarios differ in source")
    stats_a = time_per_step(scenario_a, n_steps, n_repeats)
    stats_b = time_per_step(scenario_b, n_steps, n_repeats)
    return SpeedupReport(
        model_a=model_label(scenario_a),
        model_b=model_label(scenario_b),
        n_loads=len(scenario_a.loads),
        dt_s=scenario_a.dt_s,
        median_a_ns=stats_a.median_ns_per_step,
        median_b_ns=stats_b.median_ns_per_step,
        ratio=stats_a.median_ns_per_step / stats_b.median_ns_per_step,
        stats_a=stats_a,
        stats_b=stats_b,
    )
