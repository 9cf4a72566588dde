# exceptions.py
"""
Error hierarchy shared by every app.
Management commands turn these into CommandError / failure manifests.
"""


class BadpodsError(Exception):
    """Base class for simulator errors"""


class InvalidArgumentError(BadpodsError, ValueError):
    """Argument violates an operation's contract (dimension, support, config)"""


class BudgetExceededError(InvalidArgumentError):
    """Requested work exceeds a configured cost cap"""

    def __init__(self, message, cost=None, cap=None):
        super().__init__(message)
        self.cost = cost
        self.cap = cap


class DegenerateWeightsError(BadpodsError):
    """
    All unnormalized weights vanished at some level of the filter.

    level is one of 'state', 'parameter' or 'resample'.
    """

    def __init__(self, message, level='resample', index=None):
        super().__init__(message)
        self.level = level
        self.index = index


class NumericError(BadpodsError, ArithmeticError):
    """Non-finite value produced by a density, estimator or optimizer"""

    def __init__(self, message, term=None, index=None, trace=None):
        super().__init__(message)
        self.term = term
        self.index = index
        # Objective values collected before the failure (optimizer aborts)
        self.trace = trace


class ExperimentFailure(BadpodsError):
    """A sequential run aborted; `record` holds everything logged before the failure"""

    def __init__(self, message, record=None, cause=None):
        super().__init__(message)
        self.record = record
        self.cause = cause
