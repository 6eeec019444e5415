"""Error taxonomy shared by every registry, manager and the wire server."""
from __future__ import annotations

import enum
from typing import Iterable


class ErrorKind(str, enum.Enum):
    NOT_FOUND = "NotFound"
    NAME_CONFLICT = "NameConflict"
    VERSION_NOT_FOUND = "VersionNotFound"
    VALIDATION_FAILED = "ValidationFailed"
    ACTION_NOT_FOUND = "ActionNotFound"
    BACKEND_FAILURE = "BackendFailure"
    PROTOCOL_ERROR = "ProtocolError"
    LIFECYCLE_VIOLATION = "LifecycleViolation"
    EVOLUTION_REJECTED = "EvolutionRejected"
    PERSISTENCE_ERROR = "PersistenceError"


class TEAError(Exception):
    """Base class; ``kind`` identifies the error family, ``reasons`` itemises it."""

    kind: ErrorKind = ErrorKind.PROTOCOL_ERROR

    def __init__(self, detail: str = "", reasons: Iterable[str] = ()):
        self.detail = detail
        self.reasons = list(reasons)
        text = detail
        if self.reasons:
            text = f"{detail}: {'; '.join(self.reasons)}" if detail else "; ".join(self.reasons)
        super().__init__(text)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "detail": str(self), "reasons": list(self.reasons)}


class NotFound(TEAError):
    kind = ErrorKind.NOT_FOUND


class NameConflict(TEAError):
    kind = ErrorKind.NAME_CONFLICT


class VersionNotFound(TEAError):
    kind = ErrorKind.VERSION_NOT_FOUND


class ValidationFailed(TEAError):
    kind = ErrorKind.VALIDATION_FAILED


class ActionNotFound(TEAError):
    kind = ErrorKind.ACTION_NOT_FOUND


class BackendFailure(TEAError):
    kind = ErrorKind.BACKEND_FAILURE


class ProtocolError(TEAError):
    kind = ErrorKind.PROTOCOL_ERROR


class LifecycleViolation(TEAError):
    kind = ErrorKind.LIFECYCLE_VIOLATION


class EvolutionRejected(TEAError):
    kind = ErrorKind.EVOLUTION_REJECTED


class PersistenceError(TEAError):
    kind = ErrorKind.PERSISTENCE_ERROR


_BY_KIND = {cls.kind: cls for cls in TEAError.__subclasses__()}


def error_for(kind: ErrorKind | str, detail: str = "", reasons: Iterable[str] = ()) -> TEAError:
    """Rebuild a typed error from its kind (used when decoding wire responses)."""
    cls = _BY_KIND.get(ErrorKind(kind), TEAError)
    return cls(detail, reasons)
