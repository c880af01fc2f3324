"""Exception hierarchy shared by every cocycle_lab package.

Library code raises these; only the harness turns them into exit codes,
per-row sweep failures and log messages.
"""
from typing import Any, Dict, Optional


class LabError(Exception):
    """Base class. `exit_code` is what the CLI returns when this escapes."""
    exit_code = 1

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details: Dict[str, Any] = details

    def to_dict(self) -> Dict[str, Any]:
        payload = {"error": type(self).__name__, "message": self.message}
        if self.details:
            payload["details"] = {k: _jsonable(v) for k, v in self.details.items()}
        return payload

    def __str__(self):
        return self.message


def _jsonable(value: Any) -> Any:
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    try:
        return float(value)
    except (TypeError, ValueError):
        return str(value)


# --- validation (exit code 2) ---

class ValidationError(LabError):
    exit_code = 2


class ConfigError(ValidationError):
    pass


class InvalidPotential(ValidationError):
    pass


class DegenerateRotation(ValidationError):
    pass


class MissingSystemConstants(ValidationError):
    pass


class FibreMismatch(ValidationError):
    pass


class InvalidSection(ValidationError):
    pass


class CouplingTooSmall(ValidationError):
    pass


class NotInCollisionWindow(ValidationError):
    pass


class SpanTooNarrow(ValidationError):
    pass


# --- numeric failures (exit code 3) ---

class NumericFailure(LabError):
    exit_code = 3


class PoleHit(NumericFailure):
    pass


class ScaleOverflow(NumericFailure):
    pass


class NotUniformlyHyperbolic(NumericFailure):
    def __init__(self, message: str, theta: Optional[float] = None, step: Optional[int] = None, **details: Any):
        super().__init__(message, theta=theta, step=step, **details)
        self.theta = theta
        self.step = step


class NoConvergence(NumericFailure):
    pass


class StencilError(NumericFailure):
    pass


class HorizonExceeded(NumericFailure):
    pass


class LadderExhausted(NumericFailure):
    pass


class NonUniqueMinimum(NumericFailure):
    pass


# --- bracket errors (exit code 4) ---

class BracketError(LabError):
    exit_code = 4


class BracketInvalid(BracketError):
    pass


class NonMonotonePredicate(BracketError):
    pass
