"""Exception types shared across the package."""


class MpcLabError(Exception):
    """Base class for all errors raised by mpclab."""


class ConfigInvalid(MpcLabError, ValueError):
    """A run configuration violates a protocol precondition."""


class UnknownProtocol(MpcLabError, KeyError):
    pass


class StrategyProtocolMismatch(MpcLabError, ValueError):
    """An adversary strategy was paired with a protocol it cannot drive."""


class GraphMissing(MpcLabError, RuntimeError):
    pass


class DecryptFailure(MpcLabError):
    """Ciphertext was not produced under the key used to decrypt it."""


class InvariantViolation(MpcLabError, AssertionError):
    """The simulator caught itself breaking one of its own contracts."""
