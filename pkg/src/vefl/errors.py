"""Exception types raised across the package."""


class VeflError(Exception):
    """Base class for all package errors."""


# mobility
class PositionOutsideCoverage(VeflError):
    pass


# cost model
class FrequencyOutOfRange(VeflError):
    pass


class ZeroWorstRate(VeflError):
    pass


class InfeasibleWindow(VeflError):
    pass


# learning
class DimensionMismatch(VeflError):
    pass


class DegenerateWeights(VeflError):
    pass


class ZeroSuccessProbability(VeflError):
    pass


class ZeroSelectionProbability(VeflError):
    pass


# optimizers
class NoFeasiblePlan(VeflError):
    """No participation plan satisfies the round constraints.

    ``binding`` names the constraint that rules out every candidate.
    """

    def __init__(self, message, binding=None):
        super().__init__(message)
        self.binding = binding


class ExpiredDeadline(VeflError):
    pass


class InfeasibleRateFloor(VeflError):
    pass


class InfeasibleSlot(VeflError):
    pass


# convex kernel
class Infeasible(VeflError):
    pass


class Unbounded(VeflError):
    pass


class IterationLimit(VeflError):
    """Raised in strict mode when an iterative solver exhausts its budget.

    The best iterate found so far is attached as ``result``.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


# harness
class ConfigError(VeflError):
    pass
