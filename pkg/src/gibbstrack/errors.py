"""Exception hierarchy shared by all modules."""


class GibbsTrackError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(GibbsTrackError):
    """A scenario or model description is malformed."""


class TopologyError(GibbsTrackError):
    pass


class Disconnected(TopologyError):
    pass


class Asymmetric(TopologyError):
    pass


class SelfLoop(TopologyError):
    pass


class MissingEnergy(GibbsTrackError):
    """An energy value needed by a Gibbs update is unknown."""


class InvalidSchedule(GibbsTrackError):
    pass


class InfeasibleCardinality(GibbsTrackError):
    pass


class SingularInformation(GibbsTrackError):
    """The innovation covariance of a Gaussian update is not positive definite."""


class SingularInnovation(GibbsTrackError):
    pass


class SparsityViolation(GibbsTrackError):
    """A gain matrix has a nonzero entry on a pair of non-neighbouring nodes."""


class ConditionViolated(GibbsTrackError):
    """A step-size family fails one of the convergence conditions.

    ``condition`` names the failed condition, e.g. ``"sum_a_diverges"``.
    """

    def __init__(self, condition: str, detail: str = ""):
        self.condition = condition
        super().__init__(f"{condition}: {detail}" if detail else condition)


class EvaluationFailed(GibbsTrackError):
    pass


class TooLarge(GibbsTrackError):
    pass


class IncompatibleBaseline(GibbsTrackError):
    pass
