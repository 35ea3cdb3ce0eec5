"""Exception hierarchy shared across the package.

Exit-code mapping for the CLI: ValidationError -> 2, ReplayCacheMiss -> 3.
"""


class StaykateError(Exception):
    """Base class for all package errors."""


class ValidationError(StaykateError):
    """Invalid input data, configuration, or argument."""


class TransportError(StaykateError):
    """Live chat endpoint failure after retries were exhausted."""


class AuthenticationError(TransportError):
    """Endpoint rejected the credential; not retried."""


class ReplayCacheMiss(StaykateError):
    """A request was not found in the replay cache."""

    def __init__(self, request_key: str):
        super().__init__(
            f"replay cache has no entry for request_key={request_key}; "
            "re-record the run in live mode or point --cache at the right file"
        )
        self.request_key = request_key


class PoolDisciplineError(StaykateError):
    """Selection drew from the wrong data pool; indicates a pipeline bug."""
