"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes violate an operation's contract."""


class ContractError(RuntimeError):
    """An operation was called outside its stated preconditions."""


class DegenerateVarianceError(ContractError):
    """Batch statistics requested over fewer than two elements per channel."""


class DivergenceError(RuntimeError):
    """Training loss became NaN/Inf; carries a diagnostic dump."""

    def __init__(self, message, dump=None):
        super().__init__(message)
        self.dump = dump or {}


class CheckpointMismatchError(ContractError):
    """Checkpoint architecture does not match the requested model."""
