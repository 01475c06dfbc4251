"""Exception types raised across the package."""


class CibmError(Exception):
    """Base class for all errors raised by cibm."""


class DimensionError(CibmError, ValueError):
    pass


class ValidationError(CibmError, ValueError):
    pass


class ConfigError(CibmError, ValueError):
    def __init__(self, message: str, key: str | None = None):
        super().__init__(message if key is None else f"{key}: {message}")
        self.key = key


class DomainError(CibmError, ValueError):
    pass


class ContractError(CibmError, RuntimeError):
    pass


class UndefinedMetricError(CibmError, ValueError):
    """A metric is mathematically undefined for the given input (e.g. AUC on one class)."""


class IngestionError(CibmError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class TrainingError(CibmError, RuntimeError):
    def __init__(self, message: str, epoch: int):
        super().__init__(f"epoch {epoch}: {message}")
        self.epoch = epoch
