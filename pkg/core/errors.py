"""
Error types shared by the synthesis engine.

Pure Python - NO Django imports.
"""


class InvalidArgumentError(ValueError):
    """Raised when an operation's precondition is violated."""
    pass


class ConfigError(Exception):
    """Raised for unreadable or inconsistent configuration; names the offending path or key."""

    def __init__(self, message: str, path: str | None = None):
        super().__init__(message)
        self.path = path


class StageError(Exception):
    """Raised when a pipeline stage fails; carries the stage name for diagnostics."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"Stage '{stage}' failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
