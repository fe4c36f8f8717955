"""Exception hierarchy."""


class ShadowOTError(ValueError):
    """Base class for all errors raised by shadowot."""


class NegativeWeight(ShadowOTError):
    pass


class BadMass(ShadowOTError):
    pass


class BadAxis(ShadowOTError):
    pass


class IncompatibleSpaces(ShadowOTError):
    pass


class SpaceMismatch(ShadowOTError):
    pass


class LengthMismatch(ShadowOTError):
    pass


class EmptyGrid(ShadowOTError):
    pass


class NonpositiveAlpha(ShadowOTError):
    pass


class ZeroMarginal(ShadowOTError):
    pass


class MarginalMismatch(ShadowOTError):
    pass


class MissingFactors(ShadowOTError):
    pass


class BadOrder(ShadowOTError):
    pass


class InvalidDivergence(ShadowOTError):
    pass


class UnknownExperiment(ShadowOTError):
    pass


class ConfigInvalid(ShadowOTError):
    pass


class DegenerateData(ShadowOTError):
    pass


class SolverFailure(ShadowOTError):
    """Raised when a solver cannot produce an answer (e.g. iteration cap in the simplex)."""

    def __init__(self, message, trial=None):
        if trial is not None:
            message = f"trial {trial}: {message}"
        super().__init__(message)
        self.trial = trial


class NotConverged(ShadowOTError):
    """Raised on request when an iterative solver hits ``max_iters``.

    Solvers normally return a report with ``converged=False``; this error
    carries that report for callers that prefer an exception.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
