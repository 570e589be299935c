"""Exception hierarchy shared across the package."""


class UamilError(Exception):
    """Base class for all package errors."""


class SchemaError(UamilError):
    """Missing or mismatched columns / channels / shapes."""


class ShapeError(SchemaError):
    pass


class TooShortError(UamilError):
    pass


class FitError(UamilError):
    pass


class ConfigError(UamilError):
    pass


class SamplingError(UamilError):
    pass


class AttentionError(UamilError):
    pass


class AggregationError(UamilError):
    pass


class FusionError(UamilError):
    pass


class JoinError(FusionError):
    pass


class DataError(UamilError):
    pass


class MetricError(UamilError):
    pass


class TrainingError(UamilError):
    pass


class CheckpointError(UamilError):
    pass


class UnsupportedVersionError(CheckpointError):
    pass
