"""Exception types raised across the package."""


class KinetocompError(Exception):
    """Base class for all package-specific errors."""


class NonCanonical(KinetocompError):
    """A rotation left the canonical |rotvec| < pi branch."""


class BranchError(KinetocompError):
    """Two orientations are too far apart for a well-defined small difference."""


class DimensionMismatch(KinetocompError):
    """Coordinate vector sizes do not match the chain structure."""


class NoConvergence(KinetocompError):
    """An iterative solver hit its iteration budget without meeting tolerance."""

    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class SingularConfiguration(KinetocompError):
    """Damped IK stalled at a stationary point that is not a solution."""


class SingularSystem(KinetocompError):
    """A linear system in a solver is singular or hopelessly ill-conditioned."""


class SingularAggregate(SingularSystem):
    """The summed chain stiffness is rank-deficient (under-constrained assembly)."""


class SingularKtp(SingularSystem):
    """The finite-difference target-point stiffness matrix is singular."""


class SingularKC(SingularSystem):
    """The Cartesian stiffness matrix is singular; linear compensation impossible."""


class BucklingDetected(KinetocompError):
    """The equilibrium lost stability under load (negative tangent stiffness)."""


class StabilityLoss(KinetocompError):
    """The assembled manipulator has no stable equilibrium at the requested load."""


class Divergence(KinetocompError):
    """A fixed-point iteration diverged (residual kept growing)."""


class BadConfig(KinetocompError):
    """The run configuration is malformed or inconsistent."""
