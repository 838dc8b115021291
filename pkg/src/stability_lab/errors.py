"""Exception taxonomy shared across the library."""


class StabilityLabError(Exception):
    """Base class for all library-specific failures."""


class DomainMismatchError(StabilityLabError):
    """Two objects that must share an outcome space do not."""


class InvalidDistributionError(StabilityLabError):
    """Weights are negative, unnormalized, or degenerate."""


class BudgetExceededError(StabilityLabError):
    """An exact enumeration would exceed the configured budget."""

    def __init__(self, cardinality: int, budget: int, what: str = "state space"):
        self.cardinality = cardinality
        self.budget = budget
        super().__init__(
            f"{what} has cardinality {cardinality}, exceeding the enumeration "
            f"budget of {budget}"
        )


class UnsupportedWorldError(StabilityLabError):
    """The requested analytic shortcut does not apply to this world."""


class ConfigurationError(StabilityLabError):
    """A mechanism or scenario was configured inconsistently."""


class PreconditionError(StabilityLabError):
    """A documented precondition of an operation is violated."""
