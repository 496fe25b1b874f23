"""Exception hierarchy shared by every module of the package."""


class UfdaError(Exception):
    """Base class; the CLI maps any subclass to a nonzero exit status."""


class ConfigurationError(UfdaError, ValueError):
    pass


class DegenerateInputError(UfdaError, ValueError):
    pass


class DivergenceError(UfdaError, FloatingPointError):
    """Raised when a loss or gradient stops being finite."""


class InvariantError(UfdaError, RuntimeError):
    pass


class ProtocolError(UfdaError):
    """Malformed or inconsistent black-box query traffic."""


class LabelAccessError(UfdaError, PermissionError):
    """Held-out target labels were requested outside of evaluation."""
