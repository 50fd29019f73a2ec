"""Exception hierarchy for the lab.

Every error raised on purpose by the package derives from :class:`LabError`,
so the command-line front end can render them uniformly.
"""


class LabError(Exception):
    """Base class for all deliberate failures."""


class DivergentSum(LabError):
    """The requested partition sum or integral does not converge."""


class PolicyExhausted(LabError):
    """The truncation cutoff was reached before the tail tolerance."""


class PrecisionLoss(LabError):
    """Cancellation destroyed more digits than the configured threshold allows."""


class TruncationTooSmall(LabError):
    pass


class SingularMatrix(LabError):
    pass


class PoleHit(LabError):
    pass


class CutoffTooSmall(LabError):
    """Doubling the integration cutoff changed the result beyond tolerance."""


class NonConvergent(LabError):
    """Doubling the node count changed the result beyond tolerance."""


class UnsupportedDegree(LabError):
    pass


class QuadratureNotConverged(LabError):
    pass


class DenominatorPole(LabError):
    pass


class SeriesNotDecaying(LabError):
    pass


class NearPoleSample(LabError):
    pass


class ContourDeformationRequired(LabError):
    """Positive chemical potential needs a deformed field contour (not provided)."""


class ConfigInvalid(LabError):
    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


class SingularToWorkingPrecision(RuntimeWarning):
    """Pivot growth left no significant digits in an LU determinant."""
