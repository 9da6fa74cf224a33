"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: ConfigError -> 1 (usage),
DataError and subclasses -> 2, anything unexpected -> 3.
"""


class NewsflowError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(NewsflowError):
    """Invalid configuration, bad parameter values, or missing input paths."""


class DataError(NewsflowError):
    """Input data is unreadable, malformed, or inconsistent."""


class DegenerateSeriesError(DataError):
    """A series is constant or otherwise unusable for estimation."""


class InsufficientDataError(DataError):
    """Fewer observations than the estimator requires."""

    def __init__(self, message, required=None, got=None):
        super().__init__(message)
        self.required = required
        self.got = got


class FittingError(NewsflowError):
    """Model fitting failed (singular system, degenerate vocabulary, ...)."""
