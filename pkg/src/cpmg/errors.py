"""Exception types raised across the package."""


class CpmError(Exception):
    """Base class for all package errors."""


class MedialAxis(CpmError):
    """The query point has no unique closest point on the surface."""


class NoConvergence(CpmError):
    """Newton iteration for a closest point failed from every seed."""


class Unsupported(CpmError):
    """The requested quantity is not available for this surface."""


class BandTooNarrow(CpmError):
    """A difference or interpolation stencil could not be closed inside the band."""


class StencilEscapesBand(CpmError):
    """An interpolation stencil references a grid node that is not in the band."""


class NonpositiveDiffusivity(CpmError):
    pass


class DimMismatch(CpmError):
    pass


class ZeroDiagonal(CpmError):
    pass


class Singular(CpmError):
    pass


class MaxCyclesExceeded(CpmError):
    """Raised only when a caller asks for strict convergence."""


class UnknownProblem(CpmError):
    pass
