"""Exception types shared across the pipeline."""


class HrvOptError(Exception):
    """Base class for all package errors."""


class ParseError(HrvOptError):
    """A data file could not be parsed; message carries file and line."""


class ValidationError(HrvOptError):
    """An input violates a structural invariant (overlap, emptiness, bounds)."""


class InsufficientDataError(HrvOptError):
    """A window or record is too short for the requested computation."""


class FitnessDegenerateError(HrvOptError):
    """A feature matrix cannot support cross-validation; callers map this to fitness 0."""
