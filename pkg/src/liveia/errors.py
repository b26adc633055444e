"""Exception types shared across the engine, store, service, and CLI."""

from __future__ import annotations


class LiveiaError(Exception):
    """Base class for all errors raised by this package."""


class ContractError(LiveiaError, ValueError):
    """A function was called with inputs that violate its contract
    (non-unit vectors, out-of-range angles, NaN geometry)."""


class SceneValidationError(LiveiaError, ValueError):
    """A scenario failed validation. Carries the violation list."""

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations)
        super().__init__(f"scenario invalid: {lines}")


class SerializationError(LiveiaError, ValueError):
    """A scenario document could not be decoded.

    ``code`` is one of VERSION_MISSING, VERSION_MISMATCH, DANGLING_REF,
    MALFORMED.
    """

    def __init__(self, message: str, code: str = "MALFORMED"):
        self.code = code
        super().__init__(f"{code}: {message}")


class NotFoundError(LiveiaError, KeyError):
    """Unknown scenario, sphere, or beam id."""


class ForkedEditError(LiveiaError):
    """Attempted to edit a scenario that has been forked (only unforked
    leaves may change)."""


class EngineError(LiveiaError, RuntimeError):
    """A simulation failed for a reason other than bad user input."""
