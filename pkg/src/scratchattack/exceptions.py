"""Exception hierarchy shared by every module of the package."""


class ScratchAttackError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(ScratchAttackError, ValueError):
    """An argument lies outside the domain of the operation."""


class ContractError(ScratchAttackError, RuntimeError):
    """A call sequence violated an object's usage contract (e.g. tell before ask)."""


class OracleTransportError(ScratchAttackError):
    """The oracle could not be reached, timed out or answered with a non-2xx status.

    ``attempts`` holds the number of tries made and ``retry_after`` the last
    backoff delay in seconds, so callers can decide whether to try again.
    """

    def __init__(self, message, attempts=1, retry_after=None, status=None):
        super().__init__(message)
        self.attempts = attempts
        self.retry_after = retry_after
        self.status = status


class OracleProtocolError(ScratchAttackError):
    """The oracle answered, but the payload is not a valid score/confidence document."""


class ManifestError(ScratchAttackError):
    """A dataset manifest or one of its entries could not be loaded."""


class ConfigError(ScratchAttackError):
    """A run configuration failed schema validation."""
