class CTFlowError(Exception):
    """Base class for all errors raised by ctflow."""


class InvalidSplitError(CTFlowError, ValueError):
    pass


class OutOfDomainError(CTFlowError, ValueError):
    pass


class ConfigError(CTFlowError, ValueError):
    pass


class DataError(CTFlowError, ValueError):
    pass


class ModelFormatError(CTFlowError):
    """Model file could not be parsed."""


class ModelVersionError(ModelFormatError):
    """Model file was written with an unsupported schema version."""
