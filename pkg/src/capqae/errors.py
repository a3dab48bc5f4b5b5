"""Exception hierarchy shared by every module."""


class CapQaeError(Exception):
    """Base class for all errors raised by this package."""


class ContractViolation(CapQaeError, ValueError):
    """An input violates a documented precondition (shape, range, index)."""


class DomainError(CapQaeError, ValueError):
    """A formula is evaluated outside its mathematical domain."""


class ExpiredCapletError(CapQaeError, ValueError):
    """The caplet has already reset at the valuation time."""


class InsufficientSamplesError(CapQaeError, ValueError):
    """Too few Monte Carlo paths to form an estimate and its standard error."""


class CapacityError(CapQaeError, RuntimeError):
    """A statevector register would exceed the configured memory budget."""

    def __init__(self, message, required_qubits):
        super().__init__(message)
        self.required_qubits = required_qubits


class EstimationError(CapQaeError, RuntimeError):
    """Amplitude estimation did not converge; carries the last interval."""

    def __init__(self, message, interval, rounds):
        super().__init__(message)
        self.interval = interval
        self.rounds = rounds


class DatasetError(CapQaeError, ValueError):
    """A dataset file could not be parsed or failed validation."""

    def __init__(self, message, field=None, line=None):
        where = []
        if field is not None:
            where.append(f"field {field!r}")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.field = field
        self.line = line


class UnitWarning(UserWarning):
    """A rate or volatility looks like it was written in percent."""
