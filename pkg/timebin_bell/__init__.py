"""Time-bin entanglement chained Bell test simulator."""

from .exceptions import (
    DegenerateDataError,
    FitFailureError,
    InvalidArgumentError,
    TimeBinError,
    TimetagFormatError,
)

__version__ = "1.0.0"
