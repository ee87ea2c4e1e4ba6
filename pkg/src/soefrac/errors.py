"""Exception hierarchy shared by all soefrac modules."""


class SoefracError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(SoefracError, ValueError):
    """An argument lies outside the supported domain of an operation."""


class ConvergenceError(SoefracError, RuntimeError):
    """An iterative procedure (series, quadrature, fixed point) failed to converge."""


class DegenerateSamplesError(SoefracError, ValueError):
    """Sample set too small or degenerate for rational fitting."""


class ComplexPoleError(SoefracError, RuntimeError):
    """The pole pencil produced genuinely complex eigenvalues; the kernel pipeline requires real poles."""


class PositivityError(SoefracError, RuntimeError):
    """Kernel coefficients violate the non-negativity constraints."""


class SelfCheckError(SoefracError, RuntimeError):
    """An internal consistency check (e.g. pole-transform verification) failed."""


class SchemaError(SoefracError, ValueError):
    """A serialized artifact does not match its schema or violates invariants."""


class GridMismatchError(SoefracError, ValueError):
    """Two records do not share a compatible time or space grid."""
