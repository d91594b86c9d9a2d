"""
Exception hierarchy for the UFRec framework.
The CLI maps these classes to process exit codes.
"""


class UFRecError(Exception):
    """Root of every error raised deliberately by this package."""


class ConfigError(UFRecError):
    """Invalid, unknown or off-grid configuration value."""


class DataError(UFRecError):
    """Corpus cannot be used (e.g. empty after k-core filtering)."""


class CorpusParseError(DataError):
    """A corpus line could not be parsed."""

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class ContractError(UFRecError):
    """A documented precondition was violated by the caller."""


class DimensionError(UFRecError, ValueError):
    """Operand shapes are incompatible."""


class NumericError(UFRecError, ArithmeticError):
    """Non-finite input, or log of a non-positive value."""


class NumericAbort(UFRecError):
    """Training produced a non-finite loss and was stopped."""

    def __init__(self, batch_id, components):
        self.batch_id = batch_id
        self.components = dict(components)
        parts = ", ".join(f"{name}={value!r}" for name, value in self.components.items())
        super().__init__(f"non-finite loss at batch {batch_id}: {parts}")


class CheckpointError(UFRecError):
    """Checkpoint missing, malformed, or inconsistent with the model config."""
