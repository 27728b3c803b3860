"""Exception types raised across the package."""


class DimensionError(ValueError):
    """Incompatible or invalid dimensions (for example ``r > d``)."""


class InputError(ValueError):
    """Malformed numeric input: non-finite entries, non-orthonormal frames."""


class EstimationError(RuntimeError):
    """An estimation stage could not produce a result."""
