"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid parameters or inconsistent model data."""


class ImpossibleObservation(ValueError):
    """An observation has zero likelihood under every reachable state."""


class SizeGuardError(ValueError):
    """Instance too large for exhaustive enumeration."""


class ContractViolation(RuntimeError):
    """An operation was called outside its precondition."""


class TrainingError(ValueError):
    """Training input is empty or malformed."""
