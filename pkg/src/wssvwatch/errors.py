"""Exception types shared across the package."""


class WssvWatchError(Exception):
    """Base class for all package errors."""


class DecodeError(WssvWatchError):
    """Image bytes could not be decoded."""


class ValidationError(WssvWatchError):
    """An input value violates its documented range or shape contract."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class BoundsError(ValidationError):
    """A region of interest falls outside the image."""


class LeakageError(WssvWatchError):
    """An operation would leak augmented data into validation/test splits."""


class IntegrityError(WssvWatchError):
    """Stored bytes do not match their recorded checksum."""


class ConfigurationError(WssvWatchError):
    """Bundle metadata disagrees with the serialized model."""


class CapabilityError(WssvWatchError):
    """The model uses an operator the runtime does not implement."""

    def __init__(self, op_type):
        super().__init__(f"unsupported operator: {op_type}")
        self.op_type = op_type


class ModelContractError(WssvWatchError):
    """A probability-output model emitted a value outside [0, 1]."""


class NumericError(WssvWatchError):
    """A numeric argument is non-finite."""


class StratificationError(WssvWatchError):
    """A class is too small (or empty) for the requested split."""


class UndefinedMetricError(WssvWatchError):
    """The metric is undefined for this input (e.g. no actual positives)."""


class NotFoundError(WssvWatchError):
    """A referenced record does not exist."""


class BusyError(WssvWatchError):
    """The model handle is reserved by a running benchmark."""


class BenchmarkError(WssvWatchError):
    """A prediction failed mid-benchmark; carries the failing run index."""

    def __init__(self, message, run_index):
        super().__init__(message)
        self.run_index = run_index


class DegenerateMetricWarning(UserWarning):
    """A metric hit a zero denominator and fell back to its documented value."""
