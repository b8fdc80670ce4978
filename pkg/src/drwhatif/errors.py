"""Exception types shared across the engine.

Every error carries a machine-readable ``code`` so the HTTP layer and the
CLI can map failures onto wire responses without string matching.
"""

from __future__ import annotations


class EngineError(Exception):
    """Base class for all engine failures."""

    code = "engine_error"

    def __init__(self, detail: str, code: str | None = None):
        super().__init__(detail)
        self.detail = detail
        if code is not None:
            self.code = code


class DataError(EngineError):
    """Bad input data: malformed CSV, duplicate ids, non-numeric cells."""

    code = "data_error"


class ModelError(EngineError):
    """Model fitting / loading failures (degenerate covariance, bad shapes)."""

    code = "model_error"


class ConstraintError(EngineError):
    """Ill-formed constraints (lower > upper, lock outside bounds)."""

    code = "constraint_error"


class SessionError(EngineError):
    """Session usage errors: no selection, bad row index, bad k."""

    code = "session_error"
