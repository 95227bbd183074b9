"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid configuration value (profile parameters, dims, experiment fields)."""


class ShapeError(ValueError):
    """Array dimensions do not match what an operation expects."""


class NumericalFault(ArithmeticError):
    """Non-finite value encountered where training must stop."""

    def __init__(self, message, epoch=None, batch=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch


class IngestError(IOError):
    """A source data file failed validation; message names the file."""


class CompositionError(ValueError):
    """Composed-dataset demand cannot be satisfied from the source corpus."""
