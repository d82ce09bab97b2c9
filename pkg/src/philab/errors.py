"""Exception types shared across the package."""


class PhilabError(Exception):
    """Base class for all package errors."""


class DomainError(PhilabError):
    """A physical parameter is outside its valid domain (e.g. p_o <= 0)."""


class ConfigError(PhilabError):
    """Inconsistent configuration (e.g. delay not an integer number of steps)."""


class PoleOnAxis(PhilabError):
    """Transfer-function denominator vanishes at the requested frequency."""


class ZeroDenominator(PhilabError):
    """A ratio or parallel combination produced an identically-zero denominator."""


class NegativeDelay(PhilabError):
    """A transfer-function ratio would require a non-causal (negative) delay."""


class InsufficientCoverage(PhilabError):
    """Frequency grid does not cover the locus well enough for a verdict."""


class AmbiguousCrossing(PhilabError):
    """Nyquist locus passes too close to the critical point between samples;
    refine the grid."""


class NonSettled(PhilabError):
    """Perturbation measurement did not reach a periodic steady state."""


class ConfigMismatch(PhilabError):
    """Benchmark scenarios differ where they must match (dt, source)."""


class ParseError(PhilabError):
    """Scenario file could not be parsed; message carries the line number."""


class ValidationError(PhilabError):
    """Scenario file parsed but violates an invariant; message names it."""
