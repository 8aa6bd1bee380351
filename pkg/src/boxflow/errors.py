"""Exception hierarchy shared by every boxflow module."""


class BoxflowError(Exception):
    """Base class for all boxflow failures."""


class DimensionError(BoxflowError):
    """Matrix or vector dimensions do not match."""


class ExponentError(BoxflowError):
    """An operation would create an illegal exponent (fractional power
    of a non-distinguished variable, or a negative power outside t)."""


class DeterminantError(BoxflowError):
    """A matrix declared unimodular has symbolic determinant != 1.

    The offending determinant is kept on the exception so callers can
    report it.
    """

    def __init__(self, det_text):
        super().__init__(f"determinant is not identically 1: {det_text}")
        self.det_text = det_text


class DivergentLimitError(BoxflowError):
    """A t -> infinity limit was requested for a positive t-degree."""


class DomainError(BoxflowError):
    """Numeric evaluation outside the allowed domain (t <= 0 with a
    fractional or negative t-exponent, unbound variable, ...)."""


class NilpotencyError(BoxflowError):
    """A matrix expected to be nilpotent is not."""


class CuspExcursionError(BoxflowError):
    """Lattice too deep in the cusp for safe enumeration, or too many
    grid samples tripped the enumeration guard."""

    def __init__(self, message, excluded=0, total=0):
        super().__init__(message)
        self.excluded = excluded
        self.total = total


class CatalogError(BoxflowError):
    """Unknown map name or malformed catalog file."""


class ParseError(BoxflowError):
    """Malformed polynomial / config text."""
