"""Exception types shared across the pipeline."""


class BroomscanError(Exception):
    """Base class for every error raised by this package."""


class DataError(BroomscanError, ValueError):
    """Input data or arguments violate a documented precondition."""


class EmptyCanopyError(DataError):
    """A plant has no canopy pixels in at least one band at a stage."""


class InvariantError(BroomscanError, RuntimeError):
    """An internal invariant failed; indicates a bug, not bad input."""
