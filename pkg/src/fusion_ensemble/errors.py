"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Shapes, dimensions or config fields that cannot work together."""


class DataError(ValueError):
    """Bad labels or malformed samples."""


class UsageError(ValueError):
    """An API called outside of its contract (empty split, non-scalar loss, ...)."""


class TrainingError(RuntimeError):
    """Numerical failure during optimisation (NaN loss, non-finite gradient)."""
