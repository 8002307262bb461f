"""Exception types shared across the package."""


class RcoError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(RcoError, ValueError):
    """Operand shapes are incompatible with the requested operation."""


class InvalidAxisError(RcoError, IndexError):
    """An axis index is out of range for the given tensor."""


class ParameterError(RcoError, ValueError):
    """A hyperparameter is outside its allowed range."""


class ContractError(RcoError, RuntimeError):
    """A call violated an operation's usage contract."""


class IngestionError(RcoError, ValueError):
    """A CSV input file could not be ingested; the message names the row."""


class TrainingDiverged(RcoError, ArithmeticError):
    """Training produced a non-finite loss and was aborted.

    Carries a diagnostic snapshot of where the run blew up.
    """

    def __init__(self, epoch: int, tau: float, max_abs_logit: float):
        self.epoch = epoch
        self.tau = tau
        self.max_abs_logit = max_abs_logit
        super().__init__(
            f"non-finite loss at epoch {epoch} (tau={tau:.6g}, "
            f"max|W|={max_abs_logit:.6g})"
        )
