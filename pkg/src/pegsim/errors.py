"""Exception hierarchy shared by the simulator modules."""


class PegError(Exception):
    """Base class for every error raised by pegsim."""


class InvalidInputError(PegError, ValueError):
    pass


class ContractViolationError(PegError, RuntimeError):
    """A stateful object was used out of its documented order."""


class CannotNormalizeError(InvalidInputError):
    pass


class BracketError(InvalidInputError):
    """Endpoints handed to the event locator do not straddle a root."""


class IntegrationError(PegError, RuntimeError):
    pass


class ConfigError(PegError, ValueError):
    """Bad scenario or interface configuration.

    ``path`` names the offending key (``piezo.c0``) when one is known.
    """

    def __init__(self, message, path=None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)
