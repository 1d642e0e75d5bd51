class ProtocolError(RuntimeError):
    """A device or variable was driven out of its write/read/reset order."""


class OutOfRangeError(ValueError):
    def __init__(self, value, low, high, what="probability"):
        super().__init__(f"{what} {value!r} outside achievable interval [{low:.6g}, {high:.6g}]")
        self.value = value
        self.interval = (low, high)


class NetworkError(ValueError):
    """Base class for malformed Bayesian network documents."""


class CycleError(NetworkError):
    pass


class MissingParentError(NetworkError):
    pass


class TableSizeError(NetworkError):
    pass


class ProbabilityRangeError(NetworkError):
    pass


class DuplicateVariableError(NetworkError):
    pass


class QueryError(ValueError):
    pass


class ZeroEvidenceError(ValueError):
    """Evidence has zero probability (oracle) or zero count (estimate)."""
