"""Базовые исключения пакета; CLI переводит их в коды завершения."""


class MixContextError(Exception):
    """Root of all package errors."""

    exit_code = 2

    def __init__(self, message: str) -> None:
        super().__init__(message)
        self.message = message


class ValidationError(MixContextError):
    """Raised when input data or configuration is invalid."""

    exit_code = 1


class PipelineError(MixContextError):
    """Raised when a pipeline stage fails at runtime."""

    exit_code = 2
