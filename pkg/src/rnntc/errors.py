"""Exception types shared across the package.

The CLI maps these onto its exit-code contract: input/data problems exit
with code 2, numeric failures during training with code 3.
"""


class RnntcError(Exception):
    """Base class for all errors raised by this package."""


class UnknownLabelError(RnntcError):
    """A label string does not match any configured class name."""


class MissingColumnError(RnntcError):
    """A required CSV column is absent from the header."""


class MalformedRowError(RnntcError):
    """A CSV data row is missing a required field."""


class InsufficientRecordsError(RnntcError):
    """Too few records to produce non-empty train/validation/test splits."""


class EmptySplitError(RnntcError):
    """An evaluation was requested over an empty index list."""


class ModelFormatError(RnntcError):
    """A model or bundle file is unreadable or has an unsupported version."""


class ClassSetMismatchError(RnntcError):
    """Model and data disagree on the set of class names."""


class NonFiniteLossError(RnntcError):
    """Training produced a NaN/inf loss.

    Carries the epoch and batch indices where the failure occurred.
    """

    def __init__(self, epoch: int, batch: int) -> None:
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch
