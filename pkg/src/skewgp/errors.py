"""Exception types shared across the package."""


class SkewGPError(Exception):
    """Base class for all package-specific errors."""


class DataError(SkewGPError):
    """Raised for malformed, non-finite, or otherwise unusable input data."""


class DimensionMismatchError(SkewGPError):
    """Raised when an input's dimensionality does not match the model's."""

    def __init__(self, expected, actual):
        self.expected = expected
        self.actual = actual
        super().__init__(f"dimension mismatch: expected P={expected}, got P={actual}")


class NumericalError(SkewGPError):
    """Raised when a linear-algebra step fails beyond recovery (e.g. Cholesky
    after exhausting the jitter ladder)."""
