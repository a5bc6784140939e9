"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ValidationError -> 1,
MissingArtifactError -> 2, NumericError -> 3.
"""


class FlowDanceError(Exception):
    """Base class for all package errors."""


class ValidationError(FlowDanceError):
    """Bad input: shape mismatch, out-of-range value, malformed file."""


class MissingArtifactError(FlowDanceError):
    """A required artifact (checkpoint, corpus, config) does not exist."""


class NumericError(FlowDanceError):
    """NaN/Inf detected or a numeric contract violated at runtime."""
