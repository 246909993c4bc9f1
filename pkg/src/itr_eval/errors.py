"""Exception types raised across the package.

Every error carries a short machine-readable ``code`` so the CLI can map
failures onto exit codes and reports can list them without string matching.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence


class ITREvalError(ValueError):
    code = "ERROR"

    def __init__(self, message: str, **context):
        super().__init__(message)
        self.context = context


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    index: Optional[int] = None

    def __str__(self) -> str:
        where = "" if self.index is None else f" (unit {self.index})"
        return f"{self.code}{where}: {self.message}"


class ValidationError(ITREvalError):
    """Raised when a dataset breaks one or more invariants.

    ``violations`` lists every problem found, not just the first one.
    """

    code = "VALIDATION"

    def __init__(self, violations: Sequence[Violation]):
        self.violations = tuple(violations)
        lines = "; ".join(str(v) for v in self.violations[:10])
        more = len(self.violations) - 10
        if more > 0:
            lines += f"; ... {more} more"
        super().__init__(f"invalid dataset: {lines}")

    @property
    def codes(self) -> set:
        return {v.code for v in self.violations}


class LengthMismatch(ITREvalError):
    code = "LENGTH_MISMATCH"


class BadCounts(ITREvalError):
    code = "BAD_COUNTS"


class DomainError(ITREvalError):
    code = "DOMAIN"


class EmptyCell(ITREvalError):
    code = "EMPTY_CELL"


class Unroundable(ITREvalError):
    code = "UNROUNDABLE"


class Indivisible(ITREvalError):
    code = "INDIVISIBLE"

    def __init__(self, message: str, suggestion: Optional[int] = None, **context):
        super().__init__(message, suggestion=suggestion, **context)
        self.suggestion = suggestion


class TrainFailure(ITREvalError):
    code = "TRAIN_FAILURE"

    def __init__(self, message: str, fold: int, **context):
        super().__init__(message, fold=fold, **context)
        self.fold = fold


class RuleEvaluationError(ITREvalError):
    code = "RULE_EVALUATION"

    def __init__(self, message: str, index: Optional[int] = None, **context):
        super().__init__(message, index=index, **context)
        self.index = index


class MissingCovariate(ITREvalError):
    code = "MISSING_COVARIATE"


class TooLarge(ITREvalError):
    code = "TOO_LARGE"


class ConfigError(ITREvalError):
    code = "CONFIG"

    def __init__(self, message: str, path: str = "", **context):
        full = f"{path}: {message}" if path else message
        super().__init__(full, path=path, **context)
        self.path = path
