"""Exception hierarchy shared by all frforge modules.

Two top-level families matter for the CLI exit code: ConfigurationError
(bad config / missing upstream artifact, exit 2) and ContractError
(violated operation contract at runtime, exit 1). Everything else derives
from one of them.
"""


class FrForgeError(Exception):
    """Base class for all frforge errors."""


class ConfigurationError(FrForgeError):
    """Invalid configuration, domain spec, or missing upstream artifact."""


class ContractError(FrForgeError):
    """An operation was called outside its contract."""


class ParseError(ContractError):
    """Malformed serialized data; carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NumericError(ContractError):
    """NaN or other numeric failure in a computation; names the operation."""

    def __init__(self, op: str, message: str = ""):
        super().__init__(f"numeric failure in op '{op}'" + (f": {message}" if message else ""))
        self.op = op


class EmptyDatasetError(ContractError):
    """No positive (false-reject) examples available to build a dataset."""


class RatioInfeasibleError(ContractError):
    """Not enough non-FR records to honor the requested ratio."""

    def __init__(self, requested: int, achievable: int):
        super().__init__(
            f"cannot build dataset at FR:non-FR ratio 1:{requested}; "
            f"achievable ratio is 1:{achievable}"
        )
        self.requested = requested
        self.achievable = achievable
