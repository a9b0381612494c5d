"""Error types shared across the package."""


class InputError(ValueError):
    """Caller passed something structurally invalid (bad ids, shapes, ranges)."""


class NumericError(RuntimeError):
    """A numerical operation failed (overflow, singular matrix, failed Cholesky)."""


class DataFormatError(InputError):
    """A data file could not be parsed under its declared format."""
