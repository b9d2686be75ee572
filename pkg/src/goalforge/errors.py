class ContractError(ValueError):
    """Raised when a caller violates an operation's precondition."""
