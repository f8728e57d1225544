"""Exception hierarchy shared by all modules."""


class GaugeLabError(Exception):
    """Base class for every error raised by the package."""


class GridMismatch(GaugeLabError, ValueError):
    pass


class NewtonDiverged(GaugeLabError):
    pass


class SingularJacobian(GaugeLabError):
    """Linear solve breakdown: 0 is (numerically) a Dirichlet eigenvalue."""


class PowerIterationStalled(GaugeLabError):
    pass


class WrongVariant(GaugeLabError, ValueError):
    pass


class StepTooSmall(GaugeLabError):
    """Round-off dominates a divided difference."""


class InvariantViolation(GaugeLabError):
    pass


class DegreeMismatch(GaugeLabError, ValueError):
    pass


class BranchAmbiguous(GaugeLabError):
    pass


class UnwrapConflict(GaugeLabError):
    pass


class DegeneratePivot(GaugeLabError):
    def __init__(self, message, nodes=()):
        super().__init__(message)
        self.nodes = list(nodes)


class Diverged(GaugeLabError):
    pass


class IllPosed(GaugeLabError):
    pass


class RankDeficient(GaugeLabError):
    def __init__(self, message, condition=float("nan"), unconstrained=()):
        super().__init__(message)
        self.condition = condition
        self.unconstrained = list(unconstrained)
