"""Exception hierarchy shared by every regnet module."""


class RegNetError(Exception):
    """Base class for all library errors."""


class DimensionError(RegNetError, ValueError):
    """Operand shapes are incompatible."""


class DomainError(RegNetError, ValueError):
    """An input lies outside the domain of a function (e.g. log of 0)."""


class NumericOverflowError(RegNetError, ArithmeticError):
    """A forward computation produced NaN or Inf from finite inputs."""


class ContractError(RegNetError, ValueError):
    """A caller violated an API precondition."""


class DegenerateBatchError(RegNetError, ValueError):
    """A batch is too small for second-order statistics."""


class DegenerateDatasetError(RegNetError, ValueError):
    """A dataset lacks the samples or identities an operation needs."""


class InsufficientDataError(RegNetError, ValueError):
    """A score set is empty where scores are required."""


class TrainingDivergedError(RegNetError, RuntimeError):
    """The training loss became non-finite."""

    def __init__(self, message, telemetry=None):
        super().__init__(message)
        self.telemetry = telemetry


class DatasetFormatError(RegNetError, ValueError):
    """A dataset manifest or image file is malformed."""


class ModelFormatError(RegNetError, ValueError):
    """A model file is malformed or of an unsupported version."""


class ConfigError(RegNetError, ValueError):
    """A run configuration file is invalid."""
