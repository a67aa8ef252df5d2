"""Exception types raised across the package."""


class HFLabError(ValueError):
    """Base class for all errors raised by hflab."""


class InvalidInputError(HFLabError):
    """Malformed or non-finite input."""


class DimensionError(HFLabError):
    """Operands with incompatible dimensions or counts."""


class DomainError(HFLabError):
    """Input outside the domain of an operation (e.g. singular matrix)."""


class DegenerateTupleError(DomainError):
    """A tuple of gaussian atoms whose summed matrix is singular."""


class GuardError(HFLabError):
    """A desk-scale size guard was exceeded."""
