"""Exception hierarchy shared by the library and the command-line tool."""


class IonLinkError(Exception):
    """Base class for all errors raised by ionlink."""


class ConfigError(IonLinkError, ValueError):
    """Invalid physical configuration or run configuration (CLI exit code 2)."""


class DomainError(IonLinkError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class NumericError(IonLinkError, ArithmeticError):
    """A numerical procedure failed to reach its accuracy target (CLI exit code 3)."""


class QuadratureError(NumericError):
    """Successive quadrature refinements disagree beyond tolerance."""

    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)
