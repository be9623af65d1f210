"""Exception hierarchy.

Every error raised on bad data or bad configuration derives from
``ThreshEMError`` so callers (the CLI in particular) can separate domain
failures from programming errors.
"""


class ThreshEMError(ValueError):
    """Base class for domain errors."""


class StructureError(ThreshEMError):
    """The network structure is invalid for the requested operation."""


class ParameterError(ThreshEMError):
    """A parameter table has the wrong shape or is not row-stochastic."""


class StateIndexError(ThreshEMError, IndexError):
    """A state index is out of range for its node."""


class MissingValueError(ThreshEMError):
    """An operation needing a full assignment received a missing cell."""


class IncompleteDataError(ThreshEMError):
    """Complete-data counting was given a dataset with missing cells."""


class PriorDomainError(ThreshEMError):
    """Dirichlet hyperparameters outside the estimator's domain."""


class ZeroProbabilityEvidenceError(ThreshEMError):
    """The evidence has probability zero under the current parameters."""

    def __init__(self, message: str, record: int | None = None):
        super().__init__(message)
        self.record = record


class CapacityError(ThreshEMError):
    """A brute-force enumeration would exceed its configured capacity."""

    def __init__(self, message: str, count: int):
        super().__init__(message)
        self.count = count


class CorruptBoundsError(ThreshEMError):
    """Bounds with min > max, or shapes not matching the parameters."""


class DegenerateRowError(ThreshEMError):
    """A row cannot be renormalized because its sum is not positive."""


class ConfigurationError(ThreshEMError):
    """Inconsistent learner or experiment configuration."""


class FormatError(ThreshEMError):
    """A file could not be parsed.  ``line``/``column`` are 1-based."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        where = ""
        if line is not None:
            where = f"line {line}"
            if column is not None:
                where += f", column {column}"
            where += ": "
        super().__init__(where + message)
        self.line = line
        self.column = column
