"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: configuration/usage problems exit 2,
data problems exit 3. Everything raised on purpose derives from
``ClidsError`` so callers can catch the whole family at once.
"""


class ClidsError(Exception):
    """Base class for every error this package raises deliberately."""


class ShapeMismatch(ClidsError):
    """Tensor shapes disagree with what an operation requires."""


class AxisOutOfRange(ClidsError):
    """A reduction axis does not exist for the given tensor rank."""


class DegenerateInput(ClidsError):
    """Input is too small for the operation (e.g. conv output would be empty)."""


class StaleCache(ClidsError):
    """A backward pass got a cache that was not produced by the matching forward."""


class InvalidConfig(ClidsError):
    """A configuration value or argument is out of its legal range."""


class MissingColumn(ClidsError):
    """The CSV header does not contain the requested label column."""


class EmptyFile(ClidsError):
    """The CSV file has no header row at all."""


class EmptyInput(ClidsError):
    """An operation that needs at least one element got none."""


class EmptyDataset(ClidsError):
    """Training was asked to run on a dataset with no usable rows."""


class LengthMismatch(ClidsError):
    """Two parallel sequences (labels vs. predictions) differ in length."""


class SingleClass(ClidsError):
    """ROC/AUC is undefined when only one class is present."""


class LeakageError(ClidsError):
    """Normalization statistics were about to be fit on held-out rows."""


class FeatureCountMismatch(ClidsError):
    """Feature width of the data does not match the model input width."""


class WeightsFormatError(ClidsError):
    """A weights file is corrupt, truncated, or from an unknown format version."""


# Problems with user-supplied data or run directories: CLI exit code 3.
DATA_ERRORS = (
    MissingColumn,
    EmptyFile,
    EmptyInput,
    EmptyDataset,
    LengthMismatch,
    FeatureCountMismatch,
    WeightsFormatError,
    LeakageError,
    SingleClass,
)
