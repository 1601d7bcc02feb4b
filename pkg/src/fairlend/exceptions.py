"""Exception types raised across the toolkit."""


class FairlendError(ValueError):
    """Base class for input and modeling errors."""


class DataError(FairlendError):
    """Malformed tabular input. Carries the offending row/column when known."""

    def __init__(self, message, row=None, column=None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column!r}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.row = row
        self.column = column


class EmptyGroupError(FairlendError):
    """A group-conditional quantity was requested for a group with no rows."""


class UndefinedAIRError(FairlendError):
    """The control group received no favorable decisions, so AIR has no value."""


class TrainingDivergedError(FairlendError):
    """Loss became non-finite during gradient descent."""

    def __init__(self, epoch, component="predictor"):
        super().__init__(f"{component} loss became non-finite at epoch {epoch}; "
                         "lower the learning rate")
        self.epoch = epoch
        self.component = component


class InstanceTooLargeError(FairlendError):
    """Exhaustive search refused because the enumeration would be too large."""
