"""Exception hierarchy. Data conditions and numerical failures are kept apart so
the CLI can map them to distinct exit codes."""


class LegavError(Exception):
    """Base class for all library errors."""


class InputError(LegavError, ValueError):
    """Malformed or inconsistent input."""


class NumericalError(LegavError):
    """A numerical procedure failed to produce a trustworthy result."""


class IntegrationError(NumericalError):
    pass


class OutOfInjectivityError(NumericalError):
    """Geodesic shooting did not converge (points too far apart)."""


class SpreadTooLargeError(NumericalError):
    """Center-of-mass or Weinstein iteration diverged."""


class NonUniqueFootError(NumericalError):
    """Two nearest-point candidates within tolerance; gentleness is violated."""


class NotASectionError(NumericalError):
    """Curve is not the exponential image of a section of the normal bundle."""


class DomainError(NumericalError):
    """Point outside the tubular neighbourhood where a map is defined."""


class DegenerateFormError(NumericalError):
    """An interpolated contact/symplectic form lost non-degeneracy."""


class EquivarianceError(NumericalError):
    """An output that must be symmetric was not; indicates a pipeline bug."""


class NonClosingError(InputError):
    """Horizontal lift does not close up (nonzero signed area)."""


class ImmersionError(InputError):
    """Planar generator has (near) vanishing speed."""


class AmplitudeTooLargeError(InputError):
    pass


class NotInvariantError(InputError):
    """Cover curve is not invariant under the deck involution."""


class GateError(LegavError):
    """Input outside the accepted regime in strict mode."""
