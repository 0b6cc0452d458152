"""Exceptions raised by the time-bin Bell simulator."""


class TimeBinError(Exception):
    """Base exception for the package."""


class InvalidArgumentError(TimeBinError, ValueError):
    """An argument, setting or configuration value is out of its domain."""


class DegenerateDataError(TimeBinError):
    """Counts carry no information (e.g. every run recorded zero events)."""


class TimetagFormatError(TimeBinError):
    """A timetag file could not be parsed."""


class FitFailureError(TimeBinError):
    """A least-squares fit did not converge."""

    def __init__(self, message: str, diagnostics: dict | None = None) -> None:
        super().__init__(message)
        self.diagnostics = diagnostics or {}
