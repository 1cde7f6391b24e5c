"""Exception types shared across the package."""


class KPBError(Exception):
    """Base class for all package errors.

    ``code`` is the short machine-readable tag printed by the CLI.
    """

    code = "kpb"


class ZeroModeViolation(KPBError):
    """A field carries energy on the xi = 0 column where it must not."""

    code = "zero-mode"

    def __init__(self, max_coefficient, tolerance):
        self.max_coefficient = float(max_coefficient)
        self.tolerance = float(tolerance)
        super().__init__(
            f"xi=0 coefficient {self.max_coefficient:.3e} exceeds tolerance "
            f"{self.tolerance:.3e}"
        )


class QuadratureError(KPBError):
    """Oscillatory quadrature did not reach the requested tolerance."""

    code = "quadrature"

    def __init__(self, achieved, requested):
        self.achieved = float(achieved)
        self.requested = float(requested)
        super().__init__(
            f"quadrature error estimate {self.achieved:.3e} above requested "
            f"{self.requested:.3e}"
        )


class DivergenceError(KPBError):
    """The time integrator left the small-data regime."""

    code = "divergence"

    def __init__(self, message, last_valid_time=None):
        self.last_valid_time = last_valid_time
        if last_valid_time is not None:
            message = f"{message} (last valid t={last_valid_time:.6g})"
        super().__init__(message)


class InsufficientSamples(KPBError):
    """A decay fit window is too short or too sparse."""

    code = "insufficient-samples"


class NonPositiveValue(KPBError):
    """A log-log fit received a value that is zero or negative."""

    code = "non-positive"


class UndefinedMargin(KPBError):
    """A ratio certificate has a vanishing denominator."""

    code = "undefined-margin"


class ConfigError(KPBError):
    """Invalid configuration text.

    Parameters
    ----------
    line : int or None
        1-based line number (or a tuple of numbers for duplicates).
    key : str or None
        Offending key.
    reason : str
        Human readable explanation.
    """

    code = "config"

    def __init__(self, line, key, reason):
        self.line = line
        self.key = key
        self.reason = reason
        if isinstance(line, tuple):
            where = "lines " + " and ".join(str(n) for n in line)
        else:
            where = f"line {line}" if line is not None else "config"
        what = f" key '{key}'" if key else ""
        super().__init__(f"{where}{what}: {reason}")


class MissingInput(KPBError):
    """A pipeline stage needs files that an earlier stage has not produced."""

    code = "missing-input"
