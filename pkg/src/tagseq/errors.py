"""Exception types shared across the package."""


class TagSeqError(Exception):
    """Base class for all package errors."""


class ContractError(TagSeqError, ValueError):
    """A precondition of an operation was violated."""


class DimensionError(TagSeqError, ValueError):
    """Array shapes do not line up."""


class CorpusFormatError(TagSeqError, ValueError):
    """A corpus line could not be parsed."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ConfigError(TagSeqError, ValueError):
    """Invalid or conflicting configuration values."""


class CheckpointError(TagSeqError, ValueError):
    """A checkpoint file is corrupt, truncated or of the wrong version."""


class TrainingDivergedError(TagSeqError, RuntimeError):
    """The training loss became NaN or infinite."""
