"""Exception hierarchy shared by all omvid modules.

Exit-code mapping used by the CLI: ValidationError and FormatError are
data problems (exit 1); the remaining subclasses are configuration or
request problems (exit 2).
"""


class OmvidError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(OmvidError):
    """Input data violates a documented invariant (bad coordinates, shapes, ranges)."""


class FormatError(OmvidError):
    """A file or byte stream does not match its expected format."""


class DimensionError(FormatError):
    """Frames or volumes with inconsistent dimensions."""


class ConfigurationError(OmvidError):
    """A configuration object or mode combination is unusable."""


class BudgetError(ConfigurationError):
    """A selection request that cannot be satisfied by the candidate pool."""


class ParameterError(ConfigurationError):
    """A numeric parameter outside its meaningful range."""


class CalibrationError(ConfigurationError):
    """Cost-table fitting failed (rank-deficient or non-physical solution)."""
