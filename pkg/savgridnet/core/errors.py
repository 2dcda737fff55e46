"""Exception hierarchy shared by every savgridnet module.

Each error carries the process exit code the CLI reports for it.
"""


class SavgError(Exception):
    """Base class for all savgridnet failures."""

    exit_code = 1


class InvalidInputError(SavgError, ValueError):
    """Input data violates an operation's preconditions."""

    exit_code = 2


class ShapeError(InvalidInputError):
    """Tensor shapes are incompatible with an operation."""

    def __init__(self, op: str, detail: str):
        super().__init__(f"{op}: {detail}")
        self.op = op


class ConfigurationError(SavgError):
    """Settings, manifests or checkpoints are inconsistent or missing."""

    exit_code = 3


class NumericalError(SavgError, ArithmeticError):
    """A non-finite value was produced."""

    exit_code = 4


class ConsistencyError(SavgError):
    """Internal bookkeeping mismatch, e.g. an optimizer missing a gradient."""
