"""Exception hierarchy shared by every module."""


class BlowupError(Exception):
    """Base class for all library errors."""


class SpecError(BlowupError):
    """A nonlinearity specification could not be turned into a Nonlinearity."""


class ParseError(SpecError):
    """Grammar violation in a spec string or expression."""

    def __init__(self, message, position=None, text=None):
        self.position = position
        self.text = text
        if position is not None:
            message = f"{message} at position {position}"
            if text is not None:
                message += f"\n  {text}\n  {' ' * position}^"
        super().__init__(message)


class ThresholdError(SpecError):
    """No positivity threshold ``a`` could be located."""


class DomainError(BlowupError, ValueError):
    """An argument lies outside the domain where an operation is defined."""


class ResonanceError(DomainError):
    """A power-series term hit the exponent -1 under integration."""

    def __init__(self, message, order=None):
        self.order = order
        super().__init__(message)


class EvaluationError(DomainError):
    """Expression evaluated outside its domain (division by zero, log(x<=0), ...)."""


class KellerOssermanError(BlowupError):
    """The Keller-Osserman integral does not converge, so no large solution exists."""


class NumericsError(BlowupError):
    """A numerical kernel failed to converge."""


class BracketError(NumericsError):
    """Root finding was given an interval without a sign change."""


class U0TooSmallError(NumericsError):
    """The fixed-point radicand became nonpositive; the start point U0 must grow."""


class BallViolationError(NumericsError):
    """An iterate left the ball of radius 1/4 around v_0."""


class ContractionError(NumericsError):
    """Successive fixed-point updates stopped shrinking."""


class CalibrationError(NumericsError):
    """No initial value could be found with the requested blow-up radius."""
