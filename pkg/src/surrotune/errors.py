"""Exception hierarchy.

Every error carries a short ``category`` slug so the CLI can print a
single machine-parseable line on failure.
"""

from __future__ import annotations


class TuneError(Exception):
    category = "error"


class DomainError(TuneError, ValueError):
    category = "domain"


class UnderdeterminedError(TuneError):
    category = "underdetermined"


class RankError(TuneError):
    category = "rank"

    def __init__(self, message: str, directions: list[str] | None = None):
        super().__init__(message)
        self.directions = directions or []


class PoleError(TuneError):
    category = "pole"


class DegenerateBoundsError(TuneError):
    category = "degenerate-bounds"


class OptimizationError(TuneError):
    category = "optimization"

    def __init__(self, message: str, trace: list | None = None):
        super().__init__(message)
        self.trace = trace or []


class FormatError(TuneError):
    category = "format"


class LooError(TuneError):
    """A held-out refit failed; ``index`` is the position of the held-out sample."""

    category = "loo"

    def __init__(self, index: int, cause: TuneError):
        super().__init__(f"held-out fit {index} failed: [{cause.category}] {cause}")
        self.index = index
        self.cause = cause
