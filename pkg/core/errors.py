"""Exception hierarchy shared by core and src."""

from typing import Optional


class ToolkitError(Exception):
    """Base class for every error raised by the toolkit."""


class SizeError(ToolkitError, ValueError):
    """Qubit count outside the supported range."""


class QubitIndexError(ToolkitError, ValueError):
    """Qubit index out of range or two indices that must differ coincide."""


class ContractError(ToolkitError, ValueError):
    """Caller violated an operation's precondition (lengths, tags, sizes)."""


class ModelError(ToolkitError):
    """The ideal state admits no deterministic relation for a setting."""


class EstimationError(ToolkitError):
    """Not enough rounds of a type to estimate an error rate."""


class ConfigurationError(ToolkitError):
    """Unsupported code parameters or malformed matrix files."""


class DomainError(ToolkitError, ValueError):
    """Numeric argument outside the domain of an entropy or rate function."""


class KeyLengthError(ToolkitError):
    """Key shorter than what an operation consumes."""

    def __init__(self, required: int, available: int, what: Optional[str] = None):
        self.required = required
        self.available = available
        subject = what or "key"
        super().__init__(
            f"{subject} needs {required} key bits but only {available} are available"
        )
