"""Integral tests for absolute continuity of diffusion laws with Monte Carlo checks."""

from .expr import DomainError, Expression, ExpressionSyntaxError, UnknownIdentifierError, parse
from .field import CoefficientField, Domain, FieldError
from .quad import IntegrabilityVerdict, QuadConfig, Verdict

__version__ = "0.1.0"

__all__ = [
    "CoefficientField",
    "Domain",
    "DomainError",
    "Expression",
    "ExpressionSyntaxError",
    "FieldError",
    "IntegrabilityVerdict",
    "QuadConfig",
    "UnknownIdentifierError",
    "Verdict",
    "parse",
]
