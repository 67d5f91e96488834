"""Exception hierarchy shared by all tgbformer modules."""


class TGBError(Exception):
    """Base class for every error raised by the package."""


class DimensionError(TGBError, ValueError):
    """Operand shapes are incompatible."""


class ConfigError(TGBError, ValueError):
    """A configuration value is malformed or violates an invariant."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class ContractError(TGBError, RuntimeError):
    """A precondition of an operation was violated by the caller."""


class EmptyInputError(TGBError, ValueError):
    """An operation received zero elements where at least one is needed."""


class DegenerateGraphError(TGBError, ArithmeticError):
    """A graph has a node with nonpositive degree."""


class TzrError(TGBError, OSError):
    """A TZR tensor file could not be read or written."""


class StageError(TGBError):
    """Wraps an error raised inside a named pipeline stage."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
