"""Exception types shared across the package."""

from __future__ import annotations


class DlsDdpgError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(DlsDdpgError, ValueError):
    pass


class ShapeMismatch(DimensionMismatch):
    pass


class NotPositiveDefinite(DlsDdpgError, ArithmeticError):
    """Cholesky factorization hit a non-positive pivot.

    In the least-squares updates this almost always means the ridge/anchor
    coefficient is too small for the feature Gram matrix.
    """


class NonFiniteLoss(DlsDdpgError, ArithmeticError):
    pass


class EmptyBuffer(DlsDdpgError, IndexError):
    pass


class ActionOutOfBounds(DlsDdpgError, ValueError):
    pass


class CorruptCheckpoint(DlsDdpgError, ValueError):
    pass


class DivergenceAbort(DlsDdpgError, RuntimeError):
    """Raised inside the training loop when parameters or losses blow up."""

    def __init__(self, message: str, step: int) -> None:
        super().__init__(message)
        self.step = step
