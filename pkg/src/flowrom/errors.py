"""Exception types shared across the package."""


class FlowRomError(Exception):
    """Base class for all errors raised by flowrom."""


class InvalidParameterError(FlowRomError):
    """A parameter is outside its admissible range."""


class InvalidHierarchyError(FlowRomError):
    """Two meshes do not belong to the same refinement forest, or the
    requested relation (nested / descendant) does not hold."""


class OutOfDomainError(FlowRomError):
    """A point lies outside the computational domain."""


class AssemblyError(FlowRomError):
    """Finite element assembly failed (e.g. degenerate triangle)."""


class FactorizationError(FlowRomError):
    """A sparse or dense factorization failed (singular matrix)."""


class NewtonError(FlowRomError):
    """Newton's method failed to converge.

    Carries the residual norm history in ``residuals``.
    """

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = list(residuals) if residuals is not None else []


class NonConvergenceError(FlowRomError):
    """The adaptive refinement loop exceeded its iteration guard."""
