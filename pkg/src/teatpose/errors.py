"""Exception types raised across the estimation pipeline."""


class TeatPoseError(Exception):
    """Base class for all library errors."""


class InvalidInputError(TeatPoseError, ValueError):
    """Malformed argument: bad shape, non-finite value, out-of-range parameter."""


class FrameMismatchError(TeatPoseError, ValueError):
    """Operation received a point cloud in the wrong coordinate frame."""


class EmptyMaskError(TeatPoseError):
    """Mask contour is degenerate (fewer than 3 vertices or zero area)."""


class InsufficientPointsError(TeatPoseError):
    """Too few points to run the requested estimator."""


class AmbiguousAxisError(TeatPoseError):
    """Covariance structure does not single out one axis direction."""


class InvalidSceneError(TeatPoseError, ValueError):
    """Scene description violates a geometric constraint."""


class CurveFitError(TeatPoseError):
    """Error-curve regression is underdetermined or degenerate."""
