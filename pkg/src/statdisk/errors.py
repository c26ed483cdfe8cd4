"""Exception hierarchy.

Every error raised on purpose by the library derives from
:class:`StatDiskError`; solver failures additionally derive from
:class:`SolverFailure` so the CLI can map them to exit status 2.
"""


class StatDiskError(Exception):
    """Base class."""


class ConfigError(StatDiskError, ValueError):
    """Malformed experiment configuration."""


class DimensionMismatch(StatDiskError, ValueError):
    pass


class NotOnBoundary(StatDiskError, ValueError):
    pass


class NotInDistribution(StatDiskError, ValueError):
    """Vector is not in the complex tangent distribution."""


class GridEmpty(StatDiskError, ValueError):
    pass


class DerivativeUnavailable(StatDiskError, RuntimeError):
    pass


class RankDeficient(StatDiskError, RuntimeError):
    pass


class ResolutionTooLow(StatDiskError, ValueError):
    pass


class DegenerateVelocity(StatDiskError, ValueError):
    pass


class ConeViolation(StatDiskError, ValueError):
    pass


class OpenCaseRefused(StatDiskError, ValueError):
    """Cone level a = 0: the non-compact horospherical case is not handled."""


class NotInvertible(StatDiskError, ValueError):
    pass


class WindingAmbiguous(StatDiskError, RuntimeError):
    pass


class FactorizationFailed(StatDiskError, RuntimeError):
    pass


class InterpolationGap(StatDiskError, RuntimeError):
    pass


class SolverFailure(StatDiskError, RuntimeError):
    """A nonlinear solve did not produce an acceptable result."""


class NewtonDiverged(SolverFailure):
    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


class LeftDomain(SolverFailure):
    pass


class InverseFailed(SolverFailure):
    pass


class StepUnderflow(SolverFailure):
    def __init__(self, message, last_t=0.0, family=None):
        super().__init__(message)
        self.last_t = float(last_t)
        self.family = family


class PartialAtlas(SolverFailure):
    def __init__(self, message, atlas=None, failed=()):
        super().__init__(message)
        self.atlas = atlas
        self.failed = list(failed)
