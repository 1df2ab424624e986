"""Exception hierarchy shared by every module."""


class CthsmmError(ValueError):
    """Base class for all library errors."""


class SchemaError(CthsmmError):
    """A required column or field is missing or malformed."""


class ValidationError(CthsmmError):
    """Input data violates a record-level or argument invariant."""


class UnknownObservationError(ValidationError):
    """An observation label is not part of the model's alphabet."""

    def __init__(self, label):
        self.label = label
        super().__init__(f"unknown observation label {label!r}")


class NumericError(CthsmmError):
    """A computation has no finite answer (e.g. no feasible segmentation)."""
