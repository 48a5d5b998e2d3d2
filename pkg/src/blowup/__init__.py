"""Boundary blow-up asymptotics for Delta u = f(u) on the unit ball."""

from .errors import (
    BallViolationError,
    BlowupError,
    BracketError,
    CalibrationError,
    ContractionError,
    DomainError,
    EvaluationError,
    KellerOssermanError,
    NumericsError,
    ParseError,
    ResonanceError,
    SpecError,
    ThresholdError,
    U0TooSmallError,
)
from .nonlinearity import Nonlinearity, check_keller_osserman, eval_F, parse_nonlinearity

__version__ = "0.1.0"

__all__ = [
    "BallViolationError",
    "BlowupError",
    "BracketError",
    "CalibrationError",
    "ContractionError",
    "DomainError",
    "EvaluationError",
    "KellerOssermanError",
    "Nonlinearity",
    "NumericsError",
    "ParseError",
    "ResonanceError",
    "SpecError",
    "ThresholdError",
    "U0TooSmallError",
    "check_keller_osserman",
    "eval_F",
    "parse_nonlinearity",
]
