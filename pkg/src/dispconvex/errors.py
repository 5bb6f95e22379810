"""Exception types raised by the library."""


class DispConvexError(Exception):
    """Base class for all library errors."""


class NoNontrivialRoot(DispConvexError):
    """The single-system potential has no nontrivial equal-minima point."""


class NoCrossing(DispConvexError):
    """A profile never reaches the pinning level."""


class NotMonotone(DispConvexError):
    """An operation that needs an increasing profile got a general one."""


class TailMismatch(DispConvexError):
    """Boundary values of a profile do not match its declared tails."""


class SectorViolation(DispConvexError, ValueError):
    """Kernel distances are not sorted ascending."""


class DivergenceError(DispConvexError):
    """A descent iteration increased the potential repeatedly."""
