"""Exception types shared across the package."""


class PrbAllocError(Exception):
    """Base class for all package errors."""


class ShapeError(PrbAllocError):
    """Operand dimensions do not agree."""


class ContractError(PrbAllocError):
    """A caller violated an operation's precondition."""


class NumericError(PrbAllocError):
    """A computation produced a non-finite value."""


class ConfigError(PrbAllocError):
    """A configuration file or override is invalid."""
