"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where a formula is defined."""


class ContractError(ValueError):
    """Inputs are individually valid but mutually inconsistent (shapes, sizes)."""
