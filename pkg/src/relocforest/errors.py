"""Exception types shared across the package."""


class RelocForestError(Exception):
    """Base class for all package-specific errors."""


class InvalidInputError(RelocForestError, ValueError):
    """An argument violates an operation's preconditions."""


class InvalidDepthError(InvalidInputError):
    """A depth lookup hit an invalid (zero) depth pixel."""


class InvalidPoseError(InvalidInputError):
    """A camera pose is unusable in its context (e.g. outside the scene)."""


class BehindCameraError(InvalidInputError):
    """A point with non-positive camera-frame z cannot be projected."""


class InsufficientDataError(InvalidInputError):
    """Fewer data points than the minimal configuration required."""


class DegenerateConfigurationError(RelocForestError):
    """Input geometry is degenerate (collinear points, parallel rays, ...)."""


class NoSolutionError(DegenerateConfigurationError):
    """A minimal solver found no real/feasible solution."""


class EmptyFrameError(InvalidInputError):
    """A frame contains no usable pixels (e.g. no valid depth anywhere)."""


class DataError(RelocForestError):
    """A dataset file is missing or malformed; message names the file."""
