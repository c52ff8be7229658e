class NNWMError(Exception):
    """Base class for errors raised by this package."""


class ShapeError(NNWMError, ValueError):
    pass


class NonFiniteError(NNWMError, FloatingPointError):
    pass


class FormatError(NNWMError, ValueError):
    """Malformed model or dataset file."""


class BadMagicError(FormatError):
    pass


class VersionMismatchError(FormatError):
    pass


class TruncatedStreamError(FormatError):
    pass


class LengthMismatchError(FormatError):
    pass


class CapacityError(NNWMError, ValueError):
    pass


class NotConvergedError(NNWMError, RuntimeError):
    pass


class NotApplicableError(NNWMError, ValueError):
    pass


class ConfigError(NNWMError, ValueError):
    pass
