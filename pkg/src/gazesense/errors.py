"""Exception types shared across the pipeline.

Three broad families map onto the CLI exit codes: I/O problems are left
to the builtin OSError tree (exit 1), DataError covers malformed or
inconsistent input data (exit 2), ConfigError covers bad configuration
(exit 3).
"""

from __future__ import annotations

__all__ = [
    "PipelineError",
    "DataError",
    "ConfigError",
    "MalformedCsv",
    "NonMonotonicTime",
    "MetadataMismatch",
    "EmptyTrip",
    "TripTooShort",
    "BadParams",
    "LengthMismatch",
    "NegativeInput",
    "InsufficientData",
    "EmptyInput",
    "AllInvalid",
    "MissingChannel",
    "EmptyMatrix",
    "SingleClass",
    "NameMismatch",
    "TooFewParticipants",
    "MissingScenario",
    "InsufficientTrips",
    "BadGroupSize",
    "BadConfig",
]


class PipelineError(Exception):
    """Base class for all errors raised by this package."""


class DataError(PipelineError):
    """Input data is malformed, inconsistent or insufficient."""


class ConfigError(PipelineError):
    """Configuration is syntactically or semantically invalid."""


class MalformedCsv(DataError):
    """A CSV file does not match the documented schema."""


class NonMonotonicTime(DataError):
    """Timestamps are not strictly increasing."""


class MetadataMismatch(DataError):
    """Trip metadata contradicts itself (e.g. BAC outside its block's range)."""


class EmptyTrip(DataError):
    """A trip contains no samples."""


class TripTooShort(DataError):
    """A trip is shorter than the minimum required duration."""


class BadParams(DataError):
    """Numeric parameters are out of their documented range."""


class LengthMismatch(DataError):
    """Two channels that must be aligned have different lengths."""


class NegativeInput(DataError):
    """A value that must be non-negative is negative."""


class InsufficientData(DataError):
    """Not enough valid samples to run an estimator."""


class EmptyInput(DataError):
    """An aggregation received no values."""


class AllInvalid(DataError):
    """Every sample of a channel inside a window is invalid."""


class MissingChannel(DataError):
    """A declared channel is absent from the recording."""


class EmptyMatrix(DataError):
    """A feature matrix has no rows."""


class SingleClass(DataError):
    """A label vector contains fewer than two classes."""


class NameMismatch(DataError):
    """Feature names do not match the names a model was trained with."""


class TooFewParticipants(DataError):
    """Fewer participants than a split scheme requires."""


class MissingScenario(DataError):
    """A participant lacks trips for a scenario the split scheme needs."""


class InsufficientTrips(DataError):
    """Too few trips per class for the requested analysis."""


class BadGroupSize(DataError):
    """A window grouping size is not a positive integer."""


class BadConfig(ConfigError):
    """A generator or pipeline configuration value is out of range."""
