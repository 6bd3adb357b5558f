"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Tensor shapes are incompatible for the requested operation."""


class ConfigurationError(ValueError):
    """A search space, subnet config, or run config is invalid."""


class ContractError(ValueError):
    """A caller violated an operation's precondition."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""


class BudgetInfeasibleError(RuntimeError):
    """Rejection sampling could not find enough subnets under the budget."""

    def __init__(self, message: str, acceptance_rate: float):
        super().__init__(message)
        self.acceptance_rate = acceptance_rate
