"""Rational transfer functions with transport delay, frequency sweeps,
encirclement counting and gain/phase margins.

Polynomials are real coefficient lists in ascending powers of s.  A transport
delay is carried separately and evaluated as a magnitude-one phase lag, so
its phase can be added analytically instead of being unwrapped from samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import (
    AmbiguousCrossing,
    InsufficientCoverage,
    NegativeDelay,
    PoleOnAxis,
    ZeroDenominator,
)

__all__ = [
    "RationalTF",
    "FreqResponse",
    "StabilityReport",
    "Verdict",
    "tf_eval",
    "tf_series",
    "tf_ratio",
    "freq_sweep",
    "nyquist_encirclements",
    "margins",
    "write_freq_response_csv",
]

# Locus closer than this to (-1, 0) is reported Marginal.
MARGINAL_EPS = 0.02
# Segment passing closer than this to (-1, 0) cannot be counted reliably.
AMBIGUOUS_EPS = 1e-4
# Endpoint magnitude must be below this fraction of the endpoint's distance
# to (-1, 0) before the locus is treated as closed.
COVERAGE_RATIO = 0.1


def _trim(coeffs: Sequence[float]) -> tuple[float, ...]:
    """Drop trailing (highest-order) zero coefficients, keeping at least one."""
    c = [float(x) for x in coeffs]
    while len(c) > 1 and c[-1] == 0.0:
        c.pop()
    return tuple(c)


@dataclass(frozen=True)
class RationalTF:
    """num(s)/den(s) * exp(-s*delay_s), coefficients in ascending powers."""

    num: tuple[float, ...]
    den: tuple[float, ...]
    delay_s: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "num", _trim(self.num))
        object.__setattr__(self, "den", _trim(self.den))
        object.__setattr__(self, "delay_s", float(self.delay_s))
        if not any(self.den):
            raise ZeroDenominator("denominator polynomial is identically zero")
        if self.delay_s < 0.0:
            raise NegativeDelay(f"delay_s must be >= 0, got {self.delay_s}")

    @classmethod
    def constant(cls, value: float) -> "RationalTF":
        return cls((float(value),), (1.0,))

    @property
    def num_degree(self) -> int:
        return len(self.num) - 1

    @property
    def den_degree(self) -> int:
        return len(self.den) - 1

    def with_delay(self, delay_s: float) -> "RationalTF":
        return RationalTF(self.num, self.den, delay_s)


def _den_tolerance(den: Sequence[float], omega: float) -> float:
    # Machine-scaled bound on the round-off of evaluating den at |s| = omega.
    aw = abs(omega)
    scale = 0.0
    p = 1.0
    for c in den:
        scale += abs(c) * p
        p *= aw
    return 1e3 * np.finfo(float).eps * scale


def tf_eval(tf: RationalTF, omega: float) -> complex:
    """Evaluate tf at s = j*omega (omega in rad/s).

    Raises PoleOnAxis when the denominator magnitude falls below a
    machine-scaled threshold at that frequency.
    """
    if not math.isfinite(omega):
        raise ValueError("omega must be finite")
    s = 1j * omega
    den_v = complex(npoly.polyval(s, tf.den))
    if abs(den_v) <= _den_tolerance(tf.den, omega):
        raise PoleOnAxis(f"denominator vanishes at omega={omega!r} rad/s")
    num_v = complex(npoly.polyval(s, tf.num))
    return num_v / den_v * complex(math.cos(omega * tf.delay_s),
                                   -math.sin(omega * tf.delay_s))


def tf_series(a: RationalTF, b: RationalTF) -> RationalTF:
    """Series (cascade) composition: polynomial products, delays add."""
    return RationalTF(
        tuple(npoly.polymul(a.num, b.num)),
        tuple(npoly.polymul(a.den, b.den)),
        a.delay_s + b.delay_s,
    )


def tf_ratio(numer: RationalTF, denom: RationalTF) -> RationalTF:
    """numer/denom as a rational function.

    The denominator tf may not carry more delay than the numerator: delays
    only appear in the forward path here, so the difference must stay >= 0.
    """
    if not any(denom.num):
        raise ZeroDenominator("ratio denominator is identically zero")
    delay = numer.delay_s - denom.delay_s
    if delay < 0.0:
        raise NegativeDelay(
            f"ratio would need negative delay {delay:.3e} s")
    return RationalTF(
        tuple(npoly.polymul(numer.num, denom.den)),
        tuple(npoly.polymul(numer.den, denom.num)),
        delay,
    )


@dataclass(frozen=True)
class FreqResponse:
    """Complex response samples on a strictly increasing frequency grid.

    ``phase_rad`` is the unwrapped phase including any transport delay;
    ``valid`` flags points where evaluation succeeded (pole-on-axis points
    are kept as gaps, not dropped).
    """

    freq_hz: np.ndarray
    values: np.ndarray
    phase_rad: np.ndarray
    valid: np.ndarray
    f_min_hz: float
    f_max_hz: float
    points_per_decade: Optional[float] = None

    def __post_init__(self):
        f = np.asarray(self.freq_hz, dtype=float)
        if f.ndim != 1 or len(f) < 1:
            raise ValueError("need at least one frequency point")
        if not np.all(np.diff(f) > 0):
            raise ValueError("frequency grid must be strictly increasing")
        object.__setattr__(self, "freq_hz", f)
        object.__setattr__(self, "values", np.asarray(self.values, dtype=complex))
        object.__setattr__(self, "phase_rad", np.asarray(self.phase_rad, dtype=float))
        object.__setattr__(self, "valid", np.asarray(self.valid, dtype=bool))

    @classmethod
    def from_samples(cls, freq_hz, values) -> "FreqResponse":
        """Wrap measured samples; phase is unwrapped numerically."""
        f = np.asarray(freq_hz, dtype=float)
        v = np.asarray(values, dtype=complex)
        phase = np.unwrap(np.angle(v))
        return cls(f, v, phase, np.ones(len(f), dtype=bool), float(f[0]), float(f[-1]))

    @property
    def omega_rad_s(self) -> np.ndarray:
        return 2.0 * np.pi * self.freq_hz

    @property
    def mag(self) -> np.ndarray:
        return np.abs(self.values)

    @property
    def mag_db(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 20.0 * np.log10(np.abs(self.values))

    @property
    def phase_deg(self) -> np.ndarray:
        return np.degrees(self.phase_rad)

    def points(self):
        """Iterate (omega_rad_s, value) pairs."""
        return zip(self.omega_rad_s, self.values)


def freq_sweep(tf: RationalTF, f_min_hz: float, f_max_hz: float,
               points_per_decade: float) -> FreqResponse:
    """Evaluate tf on a log-spaced grid covering [f_min_hz, f_max_hz].

    Pole-on-axis points become flagged gaps (valid=False) instead of
    aborting the sweep.
    """
    if not (0.0 < f_min_hz < f_max_hz):
        raise ValueError("need 0 < f_min_hz < f_max_hz")
    if points_per_decade < 1:
        raise ValueError("points_per_decade must be >= 1")
    decades = math.log10(f_max_hz / f_min_hz)
    n = max(2, int(math.ceil(decades * points_per_decade)) + 1)
    f = np.logspace(math.log10(f_min_hz), math.log10(f_max_hz), n)
    w = 2.0 * np.pi * f
    s = 1j * w
    num_v = npoly.polyval(s, tf.num)
    den_v = npoly.polyval(s, tf.den)
    tol = np.array([_den_tolerance(tf.den, wi) for wi in w])
    valid = np.abs(den_v) > tol
    rational = np.full(n, np.nan + 0j)
    rational[valid] = num_v[valid] / den_v[valid]
    # Delay phase is added analytically; unwrapping only sees the rational part.
    phase = np.unwrap(np.angle(rational)) - w * tf.delay_s
    values = rational * np.exp(-1j * w * tf.delay_s)
    return FreqResponse(f, values, phase, valid, f_min_hz, f_max_hz,
                        points_per_decade)


def _require_all_valid(fr: FreqResponse, what: str):
    if not fr.valid.all():
        bad = fr.freq_hz[~fr.valid]
        raise PoleOnAxis(
            f"{what} needs a gap-free response; gaps at {bad[:3]} Hz")


def _check_coverage(fr: FreqResponse, critical: complex,
                    coverage_ratio: float):
    """The locus is only sampled for omega > 0; closing it must not be able
    to wrap the critical point.  At the top of the grid the response must
    have decayed near the origin; at the bottom it must sit near the real
    axis so the gap to its conjugate mirror is short."""
    v_hi = fr.values[-1]
    if not abs(v_hi) < coverage_ratio * abs(v_hi - critical):
        raise InsufficientCoverage(
            f"|T|={abs(v_hi):.3g} at {fr.freq_hz[-1]:.3g} Hz has not decayed "
            f"against its distance to the critical point; raise f_max")
    v_lo = fr.values[0]
    if not abs(v_lo.imag) < coverage_ratio * abs(v_lo - critical):
        raise InsufficientCoverage(
            f"locus still {abs(v_lo.imag):.3g} off the real axis at "
            f"{fr.freq_hz[0]:.3g} Hz; lower f_min")


def _segment_min_distance(pts: np.ndarray, p: complex) -> float:
    """Min distance from point p to the polyline through pts."""
    a = pts[:-1]
    d = pts[1:] - a
    dd = (d * d.conjugate()).real
    t = np.zeros(len(a))
    nz = dd > 0
    t[nz] = np.clip(((p - a[nz]) * d[nz].conjugate()).real / dd[nz], 0.0, 1.0)
    proj = a + t * d
    return float(np.min(np.abs(proj - p)))


def nyquist_encirclements(fr: FreqResponse, *, critical: complex = -1.0 + 0j,
                          coverage_ratio: Optional[float] = None,
                          ambiguous_eps: Optional[float] = None) -> int:
    """Count encirclements of the critical point by the closed locus.

    The closed locus is the positive-frequency samples completed by their
    conjugate mirror (real-coefficient system) and closed through the small
    endpoint gaps, which the coverage precondition keeps near the origin.
    The sign is positive for encirclements that indicate closed-loop
    right-half-plane poles when the open loop has none (the classical N in
    Z = N + P), so a stable interconnection returns exactly 0.
    """
    if coverage_ratio is None:
        coverage_ratio = COVERAGE_RATIO
    if ambiguous_eps is None:
        ambiguous_eps = AMBIGUOUS_EPS
    _require_all_valid(fr, "encirclement counting")
    if len(fr.freq_hz) < 8:
        raise InsufficientCoverage(
            "too few samples to close a locus; use a denser grid")
    _check_coverage(fr, critical, coverage_ratio)
    v = fr.values
    contour = np.concatenate([np.conj(v[::-1]), v])
    closed = np.append(contour, contour[:1])
    if _segment_min_distance(closed, critical) < ambiguous_eps:
        raise AmbiguousCrossing(
            "locus passes within eps of the critical point between samples; "
            "refine the grid")
    z = closed - critical
    turns = float(np.sum(np.angle(z[1:] / z[:-1]))) / (2.0 * np.pi)
    ccw = int(round(turns))
    return -ccw


class Verdict(str, Enum):
    STABLE = "Stable"
    UNSTABLE = "Unstable"
    MARGINAL = "Marginal"


@dataclass(frozen=True)
class StabilityReport:
    """Winding count, margins, crossover frequencies and the verdict.

    ``encirclements`` is None when the grid cannot support winding-number
    counting (e.g. responses unbounded at the low end); the verdict then
    falls back to the margin signs.
    """

    encirclements: Optional[int]
    gain_margin_db: float
    phase_margin_deg: float
    gain_crossover_hz: Optional[float]
    phase_crossover_hz: Optional[float]
    verdict: Verdict
    min_distance_to_critical: float = field(default=math.inf)

    def as_kv(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "encirclements": "" if self.encirclements is None else self.encirclements,
            "gain_margin_db": self.gain_margin_db,
            "phase_margin_deg": self.phase_margin_deg,
            "gain_crossover_hz": "" if self.gain_crossover_hz is None else self.gain_crossover_hz,
            "phase_crossover_hz": "" if self.phase_crossover_hz is None else self.phase_crossover_hz,
            "min_distance_to_critical": self.min_distance_to_critical,
        }


def _lerp(a, b, t):
    return a + (b - a) * t


def _unity_crossings(logf, logmag, phase_deg):
    """(phase_at_crossing, f_hz) for every |T| = 1 crossing."""
    out = []
    lm = logmag
    for k in range(len(lm) - 1):
        a, b = lm[k], lm[k + 1]
        if a == 0.0:
            out.append((phase_deg[k], 10.0 ** logf[k]))
        elif (a < 0.0 < b) or (b < 0.0 < a):
            t = -a / (b - a)
            out.append((_lerp(phase_deg[k], phase_deg[k + 1], t),
                        10.0 ** _lerp(logf[k], logf[k + 1], t)))
    if not out and abs(lm[0]) < 1e-6:
        # |T| touches unity at the DC limit, just below the grid edge
        out.append((phase_deg[0], 10.0 ** logf[0]))
    return out


def _real_axis_crossings(logf, logmag, phase_deg):
    """(logmag_at_crossing, f_hz) wherever phase ≡ 180 (mod 360)."""
    out = []
    for k in range(len(phase_deg) - 1):
        a, b = phase_deg[k], phase_deg[k + 1]
        lo, hi = (a, b) if a <= b else (b, a)
        m = math.ceil((lo - 180.0) / 360.0)
        target = 180.0 + 360.0 * m
        while target <= hi:
            if a != b:
                t = (target - a) / (b - a)
                out.append((_lerp(logmag[k], logmag[k + 1], t),
                            10.0 ** _lerp(logf[k], logf[k + 1], t)))
            target += 360.0
    return out


def margins(fr: FreqResponse, *,
            marginal_eps: Optional[float] = None) -> StabilityReport:
    """Gain/phase margins from crossings interpolated between samples.

    Gain margin is -20*log10|T| at the worst phase = -180 deg crossing,
    phase margin is 180 deg + arg T at the worst |T| = 1 crossing; each is
    +inf when no crossing exists.  The verdict comes from the encirclement
    count when it is computable, otherwise from the margin signs; either way
    a locus within ``marginal_eps`` of the critical point reports Marginal.
    """
    if marginal_eps is None:
        marginal_eps = MARGINAL_EPS
    _require_all_valid(fr, "margin extraction")
    mag = fr.mag
    if not mag[-1] < 1.0:
        raise InsufficientCoverage(
            "|T| has not decayed below unity at the top of the grid")
    with np.errstate(divide="ignore"):
        logmag = np.log10(mag)
    logf = np.log10(fr.freq_hz)
    phase_deg = fr.phase_deg

    pm = math.inf
    gain_xover = None
    for ph_c, f_c in _unity_crossings(logf, logmag, phase_deg):
        wrapped = ((ph_c + 180.0) % 360.0) - 180.0
        cand = 180.0 + wrapped
        if cand < pm:
            pm, gain_xover = cand, f_c

    gm = math.inf
    phase_xover = None
    for lm_c, f_c in _real_axis_crossings(logf, logmag, phase_deg):
        cand = -20.0 * lm_c
        if cand < gm:
            gm, phase_xover = cand, f_c

    # distance of the locus to the critical point, measured on segments so
    # a passage between samples is not missed; the closure through the
    # conjugate mirror only has meaning when the endpoint coverage holds
    # (a pole-at-origin response cannot be closed by a straight segment)
    try:
        _check_coverage(fr, -1.0 + 0j, COVERAGE_RATIO)
        closable = True
    except InsufficientCoverage:
        closable = False
    if closable:
        contour = np.concatenate([np.conj(fr.values[::-1]), fr.values])
        min_dist = _segment_min_distance(np.append(contour, contour[:1]),
                                         -1.0 + 0j)
    else:
        min_dist = _segment_min_distance(fr.values, -1.0 + 0j)

    enc: Optional[int]
    if min_dist < marginal_eps:
        # too close to the critical point for a meaningful winding count
        enc = None
        verdict = Verdict.MARGINAL
    elif closable:
        enc = nyquist_encirclements(fr)
        verdict = Verdict.STABLE if enc == 0 else Verdict.UNSTABLE
    else:
        enc = None
        verdict = Verdict.STABLE if (gm > 0.0 and pm > 0.0) \
            else Verdict.UNSTABLE

    return StabilityReport(
        encirclements=enc,
        gain_margin_db=gm,
        phase_margin_deg=pm,
        gain_crossover_hz=gain_xover,
        phase_crossover_hz=phase_xover,
        verdict=verdict,
        min_distance_to_critical=min_dist,
    )


def write_freq_response_csv(fr: FreqResponse, path) -> None:
    """CSV with header freq_hz,re,im,mag_db,phase_deg (phase unwrapped)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("freq_hz,re,im,mag_db,phase_deg\n")
        mag_db = fr.mag_db
        phase_deg = fr.phase_deg
        for i, f in enumerate(fr.freq_hz):
            v = fr.values[i]
            fh.write(f"{float(f)!r},{float(v.real)!r},{float(v.imag)!r},"
                     f"{float(mag_db[i])!r},{float(phase_deg[i])!r}\n")
