"""Exception hierarchy shared by all modules."""


class VEMError(Exception):
    """Base class for every error raised by :mod:`vemcurve`."""


class NoIntersection(VEMError):
    """A normal ray never meets the curved boundary within the search range."""


class NonConvergence(VEMError):
    """An iterative routine (Newton, bracketing) did not converge."""


class DegenerateCell(VEMError):
    """A polygon with (numerically) zero area or an inverted triangulation."""


class MeshInvalid(VEMError):
    """Mesh generation produced a tessellation failing the incidence audit."""


class InvariantViolation(VEMError):
    """A loaded or constructed object breaks one of its stated invariants."""


class ParseError(VEMError):
    """A mesh or configuration file could not be parsed."""


class SingularG(VEMError):
    """The projector matrix ``G`` is numerically singular."""


class SingularMass(VEMError):
    """The monomial mass matrix of a cell is numerically singular."""


class SolveFailure(VEMError):
    """The sparse linear solve did not reach the required residual."""


class InsufficientData(VEMError):
    """Too few data points to fit a convergence slope."""
