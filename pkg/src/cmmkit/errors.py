"""Exception hierarchy shared by all modules."""


class CMMError(Exception):
    """Base class for all errors raised by cmmkit."""


class SchemaError(CMMError, ValueError):
    """Sample or dataset does not match the declared column schema."""


class EmptyInputError(CMMError, ValueError):
    """An operation received no samples."""


class DegenerateInputError(CMMError, ArithmeticError):
    """Evidence underflowed for a sample, so posteriors are undefined."""

    def __init__(self, message, sample_index=None):
        super().__init__(message)
        self.sample_index = sample_index


class StructuralError(CMMError, ValueError):
    """A model edit would leave the classifier structurally invalid."""


class UndefinedMeasureError(CMMError, ValueError):
    """A measure is not defined for the given component or input."""


class BandwidthError(CMMError, ValueError):
    """Automatic Parzen bandwidth selection produced h = 0."""


class ExtractionError(CMMError, ValueError):
    """Rules cannot be extracted from the classifier as given."""


class ParameterError(CMMError, ValueError):
    """Distribution parameters are outside their valid domain."""
