"""Exception types raised across obsvkit."""


class ObsvkitError(Exception):
    """Base class for all obsvkit errors."""


class InvalidConfig(ObsvkitError, ValueError):
    """A scenario or run configuration is not acceptable."""


class CheiralityError(ObsvkitError, ValueError):
    """A camera feature sits behind (or too close to) the image plane."""


class ChartExitError(ObsvkitError, ValueError):
    """The Gibbs vector left the well-conditioned chart ``|s| < S_MAX``."""


class JacobianDomainError(ObsvkitError, ValueError):
    """A map could not be evaluated on the finite-difference stencil."""


class HypothesisViolation(ObsvkitError):
    """A theorem's hypothesis does not hold for the configuration at hand."""
