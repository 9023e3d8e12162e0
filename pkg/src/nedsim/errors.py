"""Exception hierarchy shared by all nedsim modules."""


class NedError(Exception):
    """Base class for every error raised by nedsim."""


class InvalidArgument(NedError, ValueError):
    pass


class NumericInstability(NedError, ArithmeticError):
    def __init__(self, message, sample_index=None):
        super().__init__(message)
        self.sample_index = sample_index


class InsufficientExcitation(NedError, ValueError):
    pass


class OptimizerDivergence(NedError, ArithmeticError):
    pass


class InvalidWindow(NedError, ValueError):
    pass


class ResolutionLimited(NedError, ValueError):
    pass


class UndefinedReference(NedError, ValueError):
    pass


class NoFeasibleCandidate(NedError, RuntimeError):
    pass


class DegenerateGeometry(NedError, ValueError):
    pass


class RejectedReset(NedError, RuntimeError):
    pass
