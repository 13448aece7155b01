"""Exception hierarchy.

The CLI maps the three top-level families onto exit codes: data problems
exit 2, numerical failures exit 3, undefined metrics exit 4.
"""


class SpikesurvError(Exception):
    """Base class for all errors raised by this package."""


class DataError(SpikesurvError, ValueError):
    pass


class SchemaError(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class EmptyDatasetError(DataError):
    pass


class DimensionError(DataError):
    pass


class ModelFormatError(DataError):
    def __init__(self, message, offset=None):
        super().__init__(message)
        self.offset = offset


class NumericalError(SpikesurvError, ArithmeticError):
    pass


class NonFiniteError(NumericalError):
    """A non-finite value appeared inside a differentiable computation."""

    def __init__(self, primitive):
        super().__init__(f"non-finite value produced by primitive '{primitive}'")
        self.primitive = primitive


class ConvergenceError(NumericalError):
    pass


class DivergenceError(NumericalError):
    pass


class TrainingError(NumericalError):
    def __init__(self, message, epoch=None, batch=None, last_good_epoch=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
        self.last_good_epoch = last_good_epoch


class UndefinedMetricError(SpikesurvError, ValueError):
    pass
