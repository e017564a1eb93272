"""Exception hierarchy shared by all vemsad modules."""


class VemsadError(Exception):
    """Base class for all vemsad errors."""


class ParseError(VemsadError):
    """Mesh file is malformed or uses an unknown format."""


class TopologyError(VemsadError):
    """Mesh connectivity is inconsistent (non-closed cell, dangling face, ...)."""


class GeometryError(VemsadError):
    """Geometric invariant violated (non-planar face, negative volume, ...)."""


class DegenerateCellError(GeometryError):
    """Sub-tetrahedralization of a cell produced (near) zero-volume tetrahedra."""


class DegenerateFaceError(GeometryError):
    """Face triangulation produced (near) zero-area triangles."""


class EmptyDirichletError(VemsadError):
    """Boundary classification left the Dirichlet set empty."""


class SingularProjectionError(VemsadError):
    """A local projection system is rank deficient."""


class NonSPDError(VemsadError):
    """A diffusivity evaluation violated symmetric positive definiteness."""


class ConstraintError(VemsadError):
    """Constraint bookkeeping is unusable (e.g. no Dirichlet DoFs at all)."""


class DimensionError(VemsadError):
    """Vector/matrix sizes do not match the DoF map."""


class QuadratureError(VemsadError):
    """A quadrature rule could not be built or applied."""


class NonConvergenceError(VemsadError):
    """Fixed-point loop hit the iteration cap. Carries the iteration trace."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class RateAnomalyWarning(UserWarning):
    """Observed convergence rate fell below the expected threshold."""
