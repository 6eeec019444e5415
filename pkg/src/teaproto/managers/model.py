"""Model backend abstraction with ordered fallback."""
from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Protocol

from .. import canonical
from ..errors import BackendFailure, NotFound, ValidationFailed


class ModelBackend(Protocol):
    id: str
    capabilities: frozenset[str]

    def invoke(self, request: Any) -> Any: ...


def fingerprint(request: Any) -> str:
    return hashlib.sha256(canonical.dumps(request).encode("utf-8")).hexdigest()


@dataclass
class ScriptedBackend:
    """Deterministic backend: canned responses keyed by request fingerprint.

    ``failing=True`` makes every call fail; a response value that is an
    Exception instance is raised for that request only.
    """

    id: str
    responses: Mapping[str, Any] = field(default_factory=dict)
    default: Any = None
    failing: bool = False
    capabilities: frozenset[str] = frozenset({"chat"})

    def invoke(self, request: Any) -> Any:
        if self.failing:
            raise RuntimeError(f"backend {self.id} is unavailable")
        fp = fingerprint(request)
        if fp in self.responses:
            value = self.responses[fp]
        elif self.default is not None:
            value = self.default
        else:
            raise LookupError(f"backend {self.id} has no scripted response for {fp[:12]}")
        if isinstance(value, BaseException):
            raise value
        return value

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ScriptedBackend:
        """Wire form: ``{id, responses?: [{request, response}], default?, failing?, capabilities?}``."""
        try:
            responses = {fingerprint(r["request"]): r["response"] for r in data.get("responses", ())}
            return cls(
                id=data["id"],
                responses=responses,
                default=data.get("default"),
                failing=bool(data.get("failing", False)),
                capabilities=frozenset(data.get("capabilities", ["chat"])),
            )
        except (KeyError, TypeError) as exc:
            raise ValidationFailed(f"malformed backend description: {exc}") from None


class FunctionBackend:
    def __init__(self, backend_id: str, fn: Callable[[Any], Any], capabilities=("chat",)):
        self.id = backend_id
        self.capabilities = frozenset(capabilities)
        self._fn = fn

    def invoke(self, request: Any) -> Any:
        return self._fn(request)


class ModelManager:
    def __init__(self):
        self._lock = threading.Lock()
        self._backends: dict[str, ModelBackend] = {}

    def register(self, backend: ModelBackend) -> None:
        with self._lock:
            self._backends[backend.id] = backend

    def backend(self, backend_id: str) -> ModelBackend:
        with self._lock:
            try:
                return self._backends[backend_id]
            except KeyError:
                raise NotFound(f"no model backend {backend_id!r}") from None

    def list(self) -> list[str]:
        with self._lock:
            return sorted(self._backends)

    def invoke(self, request: Any, chain: list[str]) -> dict:
        """First backend in ``chain`` that succeeds serves the request."""
        if not chain:
            raise ValidationFailed("fallback chain is empty")
        backends = [self.backend(b) for b in chain]
        failures = []
        for backend in backends:
            try:
                response = backend.invoke(request)
                canonical.check_structured(response)
            except Exception as exc:  # noqa: BLE001 - every backend failure triggers fallback
                failures.append(f"{backend.id}: {type(exc).__name__}: {exc}")
                continue
            return {"served_by": backend.id, "response": response}
        raise BackendFailure(f"all {len(failures)} backends failed", failures)
