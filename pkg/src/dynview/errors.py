"""Exception types shared across the package."""


class DynviewError(Exception):
    """Base class for all package errors."""


class GeometryError(DynviewError):
    """Invalid geometric input (degenerate depth, bad range, ...)."""


class ShapeError(DynviewError):
    """Tensor/array shape mismatch."""


class ConfigError(DynviewError):
    """Invalid or inconsistent configuration."""


class DataError(DynviewError):
    """Dataset I/O or layout problem."""


class NumericalError(DynviewError):
    """Non-finite values encountered during optimization."""
