from __future__ import annotations


class FractionalCalculusError(Exception):
    pass


class InvalidParams(FractionalCalculusError, ValueError):
    pass


class LeavesAlgebra(InvalidParams):
    """An operator image is not a finite sum of locally integrable ML terms."""

    pass


class InsufficientSmoothness(InvalidParams):
    pass


class NumericalFailure(FractionalCalculusError):
    pass


class NonConvergence(NumericalFailure):
    def __init__(self, error_message, terms_used: int | None = None) -> None:
        super().__init__(error_message)
        self.terms_used = terms_used


class QuadratureFailure(NumericalFailure):
    def __init__(self, error_message, abserr: float | None = None) -> None:
        super().__init__(error_message)
        self.abserr = abserr


class InterpolationFailure(NumericalFailure):
    pass


class ModeDivergence(NumericalFailure):
    def __init__(self, error_message, cutoff: float) -> None:
        super().__init__(error_message)
        self.cutoff = cutoff


class TruncationWarning(UserWarning):
    def __init__(self, message: str, tail_bound: float) -> None:
        super().__init__(message)
        self.tail_bound = tail_bound
