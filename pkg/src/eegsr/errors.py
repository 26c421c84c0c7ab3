"""Exception types shared across the package."""


class EegsrError(Exception):
    """Base class for all package errors."""


class DataError(EegsrError):
    """Invalid recording, epoch, or split input."""


class ParseError(EegsrError):
    """Malformed file content; carries a line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(EegsrError):
    """Invalid or inconsistent run configuration."""


class ArtifactError(EegsrError):
    """A required input artifact is missing or unreadable."""


class CheckpointError(EegsrError):
    """Checkpoint directory is incomplete, corrupt, or incompatible."""


class NumericAbort(EegsrError):
    """Training produced a non-finite loss; carries the failing step index."""

    def __init__(self, step, message="non-finite loss"):
        super().__init__(f"{message} at step {step}")
        self.step = step
