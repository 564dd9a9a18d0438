"""Exception hierarchy shared by all uavpower modules."""
from __future__ import annotations

from typing import Optional


class UavPowerError(Exception):
    """Base class for every error raised by this package."""


class InvalidParameterError(UavPowerError, ValueError):
    pass


class SingularConfigurationError(UavPowerError, ValueError):
    pass


class NumericError(UavPowerError, ArithmeticError):
    def __init__(self, message: str, residual: Optional[float] = None, layer: Optional[int] = None):
        super().__init__(message)
        self.residual = residual
        self.layer = layer


class SchemaError(UavPowerError, ValueError):
    pass


class UnlabeledSampleError(UavPowerError, ValueError):
    pass


class DegenerateScaleError(UavPowerError, ValueError):
    def __init__(self, column: str):
        super().__init__(f"column {column!r} is constant on the fitting rows; cannot scale")
        self.column = column


class ShapeError(UavPowerError, ValueError):
    pass


class CheckpointError(UavPowerError):
    pass


class ChecksumError(CheckpointError):
    pass


class VersionError(CheckpointError):
    pass


class DivergenceError(UavPowerError, ArithmeticError):
    def __init__(self, epoch: int, batch: int, loss: float):
        super().__init__(f"training diverged at epoch {epoch}, batch {batch} (loss={loss})")
        self.epoch = epoch
        self.batch = batch
        self.loss = loss


class NoDataError(UavPowerError):
    pass
