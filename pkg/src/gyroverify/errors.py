"""Exception hierarchy shared by all modules."""


class GyroError(Exception):
    """Base class for every error raised by gyroverify."""


class DomainEscape(GyroError):
    """A position left the configured field domain."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class DerivativeUnavailable(GyroError):
    pass


class UnknownModel(GyroError):
    pass


class BadParams(GyroError):
    pass


class ZeroGuideField(GyroError):
    pass


class NoConvergence(GyroError):
    pass


class NegativeMoment(GyroError):
    pass


class SigmaSingular(GyroError):
    pass


class BStarParZero(GyroError):
    pass


class HorizonExceeded(GyroError):
    pass


class DegenerateFit(GyroError):
    pass


class ConfigError(GyroError):
    """Base for configuration problems (CLI exit code 2)."""


class ParseError(ConfigError):
    pass


class ValidationError(ConfigError):
    pass
