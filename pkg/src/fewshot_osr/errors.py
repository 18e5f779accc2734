"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Vectors or models whose dimensions do not line up."""


class DataError(ValueError):
    """Input data that violates a precondition (missing class, empty set, bad file)."""
