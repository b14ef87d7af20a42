"""Error types raised across the workbench."""


class FalltimeError(Exception):
    """Base class for all workbench-specific errors."""


class NonFiniteState(FalltimeError):
    """A state passed to the dynamics contains NaN or infinity."""


class IntegrationDiverged(FalltimeError):
    """The integrator left the configured state bounds."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class CalibrationFailed(FalltimeError):
    """Force-range calibration could not bracket the target fall fraction."""


class UnknownFeatureSet(FalltimeError):
    """Requested feature set id is not registered."""


class DegenerateSeries(FalltimeError):
    """A series is too short for the requested statistic."""


class LeadTimeOutOfRange(FalltimeError):
    """Training lead time outside the supported interval."""


class TooFewTrajectories(FalltimeError):
    """A stratum has fewer trajectories than the requested folds."""


class SingularR(FalltimeError):
    """Feature correlation matrix is singular beyond repair."""


class InsufficientData(FalltimeError):
    """Not enough windows or frames to train a model."""


class NoConvergence(FalltimeError):
    """Iterative solver hit its iteration cap before reaching tolerance."""


class NoFeasibleLeadTime(FalltimeError):
    """No candidate training lead time met the rate bounds."""

    def __init__(self, message, table=None):
        super().__init__(message)
        self.table = table if table is not None else []
