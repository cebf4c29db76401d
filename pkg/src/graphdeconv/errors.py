"""Exception types raised by graphdeconv."""


class GraphDeconvError(Exception):
    """Base class for all package errors."""


class NotDiagonalizable(GraphDeconvError):
    """The shift matrix has no usable real eigendecomposition."""


class GenerationFailed(GraphDeconvError):
    """A random graph could not be drawn with a diagonalizable shift."""


class DimensionMismatch(GraphDeconvError, ValueError):
    pass


class AllColumnsZero(GraphDeconvError, ValueError):
    """Fewer than two numerically nonzero columns remain for the coherence."""


class TooLarge(GraphDeconvError, ValueError):
    """A brute-force enumeration exceeds its size guard."""


class Infeasible(GraphDeconvError):
    """The observations are inconsistent with the constraints."""


class NumericalBreakdown(GraphDeconvError):
    """The conic solver diverged or stalled."""


class ZeroMatrix(GraphDeconvError, ValueError):
    pass


class ZeroFilter(GraphDeconvError, ValueError):
    pass


class ZeroInput(GraphDeconvError, ValueError):
    pass


class InconsistentSideInfo(GraphDeconvError, ValueError):
    """No scaling of the subspace estimate reproduces the known input values."""


class ConfigError(GraphDeconvError, ValueError):
    pass
