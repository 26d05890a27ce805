"""Exception types shared across the library.

Every error raised by public API functions derives from LrfaError so callers
(and the CLI) can map failures to a single machine-parsable category.
"""


class LrfaError(Exception):
    """Base class for all library errors."""

    category = "error"


class DimensionError(LrfaError):
    """Shape mismatch between operands; carries both shapes."""

    category = "dimension"

    def __init__(self, message, shape_a=None, shape_b=None):
        if shape_a is not None or shape_b is not None:
            message = f"{message} (got {shape_a} vs {shape_b})"
        super().__init__(message)
        self.shape_a = shape_a
        self.shape_b = shape_b


class ParameterError(LrfaError):
    """A scalar argument is outside its valid range."""

    category = "parameter"


class DegenerateInputError(LrfaError):
    """Input is structurally valid but numerically degenerate (zero norm, empty box)."""

    category = "degenerate"


class DistributionError(LrfaError):
    """Vectors passed as probability distributions fail normalization checks."""

    category = "distribution"


class NumericError(LrfaError):
    """A NaN/Inf appeared where finite values are required."""

    category = "numeric"


class VocabularyError(LrfaError):
    """Inconsistent action/object/pair vocabulary."""

    category = "vocabulary"


class FormatError(LrfaError):
    """A file does not match its declared binary/text format."""

    category = "format"


class ConsistencyError(LrfaError):
    """File contents disagree with their own header or sidecar."""

    category = "consistency"


class ConfigError(LrfaError):
    """Invalid or infeasible run configuration."""

    category = "config"


class UsageError(LrfaError):
    """Command invoked without a required key or with bad arguments."""

    category = "usage"


class UndefinedMetricError(LrfaError):
    """A metric (e.g. average precision) is undefined for the given labels."""

    category = "undefined-metric"
