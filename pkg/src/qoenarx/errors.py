"""Exception hierarchy. Each branch carries the CLI exit code it maps to."""


class QoeNarxError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class DataValidationError(QoeNarxError):
    """Invalid or inconsistent input data (CLI exit code 3)."""

    exit_code = 3


class NumericalError(QoeNarxError):
    """Numerical failure during training or evaluation (CLI exit code 4)."""

    exit_code = 4


class IoError(QoeNarxError):
    """File or format problem (CLI exit code 5)."""

    exit_code = 5


# trace / session model
class EmptyOverlap(DataValidationError):
    """Series in a session share no full resampling window."""


class NonFinite(DataValidationError):
    """NaN or infinity encountered where finite samples are required."""


class ConstantChannel(DataValidationError):
    """A channel (or the output) is constant over the training set."""


class MissingChannel(DataValidationError):
    """A session lacks a channel that other sessions provide."""


class MissingSubjective(DataValidationError):
    """Operation requires a subjective trace the session does not have."""


class UnknownContent(DataValidationError):
    """Requested content id is not present in the data."""


class TooShort(DataValidationError):
    """Series too short to build a single regressor row."""


class InsufficientWarmup(DataValidationError):
    """Closed-loop rollout was not given enough seed samples."""


class LengthMismatch(DataValidationError):
    """Paired inputs have different lengths."""


class Empty(DataValidationError):
    """An input that must be non-empty is empty."""


class ConstantInput(DataValidationError):
    """Correlation undefined: an input vector is (rank-)constant."""


class MixedSessions(DataValidationError):
    """Forecasts from different sessions were combined."""


class AllFailed(NumericalError):
    """Every training job in a grid search diverged."""


class SingularNormalEquations(NumericalError):
    """Damped normal equations unsolvable even at maximum damping."""
