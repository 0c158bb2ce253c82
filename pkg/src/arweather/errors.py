"""Package-wide exception base.

Every module defines its own error types; they all derive from
:class:`ArWeatherError` so callers (notably the CLI) can distinguish
pipeline failures from programming errors.
"""


class ArWeatherError(Exception):
    """Base class for all errors raised by this package."""
