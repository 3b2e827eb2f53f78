"""Exception hierarchy and CLI exit codes."""

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_IO = 3


class PulseLabError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(PulseLabError, ValueError):
    """Invalid parameters or configuration. Carries every problem found."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class NumericalError(PulseLabError, RuntimeError):
    """A solver or analytic routine could not produce a valid result."""

    def __init__(self, message: str, t: float | None = None):
        self.t = t
        if t is not None:
            message = f"{message} (at t={t:.6g})"
        super().__init__(message)


class CFLViolation(NumericalError):
    """Time step too large for the explicit transport part; step refused."""


class NonPulseRegime(NumericalError):
    """Parameters (or a trajectory) do not describe a traveling pulse."""
