"""
Exception hierarchy for the radd package.

Every error raised on purpose by the library derives from RaddError so the
command layer can map it to an exit code.
"""

from typing import Any, Dict, List, Optional


class RaddError(Exception):
    """Base class for all library errors."""


class DomainError(RaddError, ValueError):
    """An argument lies outside the domain of an operation (t, lambda, s < t...)."""


class DegenerateContextError(RaddError):
    """The conditioning event has probability zero under the data distribution."""


class InvalidTransitionError(RaddError):
    """A score or transition was requested for a move the absorbing process never makes."""


class ShapeError(RaddError, ValueError):
    """A sequence does not match the (d, N) a model or table was built for."""


class NumericError(RaddError):
    """A non-finite value appeared in a gradient or an optimizer update."""

    def __init__(self, message: str, param_index: Optional[int] = None):
        super().__init__(message)
        self.param_index = param_index


class InfiniteLossError(NumericError):
    """The model assigns exactly zero probability to a target token."""

    def __init__(self, position: int, token: int):
        super().__init__(
            f"Model assigns zero probability to token {token} at position {position}"
        )
        self.position = position
        self.token = token


class DivergenceError(NumericError):
    """Training loss stayed far above its initial value for too long."""

    def __init__(self, message: str, report: Optional[List[Dict[str, Any]]] = None):
        super().__init__(message)
        self.report = report or []


class EmptyCorpusError(RaddError):
    """The corpus file holds fewer bytes than one block."""


class ConfigError(RaddError):
    """A run configuration failed validation."""

    def __init__(self, message: str, key_path: str = ""):
        super().__init__(f"{key_path}: {message}" if key_path else message)
        self.key_path = key_path


class CompatibilityError(RaddError):
    """A checkpoint does not match the configured vocabulary, length or backend."""


class VerificationFailure(RaddError):
    """At least one oracle check failed."""
