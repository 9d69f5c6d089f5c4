"""Exception types raised across the package."""


class DilconvError(Exception):
    """Base class for all package errors."""


class ShapeError(DilconvError, ValueError):
    pass


class TensorIndexError(DilconvError, IndexError):
    pass


class ConfigError(DilconvError, ValueError):
    pass


class LabelError(DilconvError, ValueError):
    pass


class FormatError(DilconvError, ValueError):
    pass


class StateError(DilconvError, RuntimeError):
    pass


class DivergenceError(DilconvError, FloatingPointError):
    """Non-finite loss during training; carries the epoch and step."""

    def __init__(self, epoch, step, loss):
        super().__init__(f"loss diverged to {loss!r} at epoch {epoch}, step {step}")
        self.epoch = epoch
        self.step = step
        self.loss = loss
