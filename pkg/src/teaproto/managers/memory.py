"""Session-scoped event memory with a periodic summarization hook."""
from __future__ import annotations

import threading
from collections import Counter
from dataclasses import dataclass
from typing import Any, Callable, Sequence

from .. import canonical
from ..errors import LifecycleViolation, NotFound
from ..util import Clock, SystemClock, random_id

SUMMARY_EVERY = 20


@dataclass(frozen=True)
class SessionHandle:
    session_id: str
    agent_name: str
    task_id: str

    def to_dict(self) -> dict:
        return {"session_id": self.session_id, "agent_name": self.agent_name, "task_id": self.task_id}


@dataclass(frozen=True)
class MemoryEvent:
    session_id: str
    step: int
    kind: str
    payload: Any
    at: float

    def to_dict(self) -> dict:
        return {"session_id": self.session_id, "step": self.step, "kind": self.kind, "payload": self.payload, "at": self.at}


def count_kinds(handle: SessionHandle, window: Sequence[MemoryEvent]) -> dict:
    """Default summary: how many events of each kind the window holds."""
    counts = Counter(e.kind for e in window)
    return {"from_step": window[0].step, "to_step": window[-1].step, "kinds": dict(sorted(counts.items()))}


class _Session:
    __slots__ = ("handle", "lock", "open", "events", "summaries", "trace_index")

    def __init__(self, handle: SessionHandle):
        self.handle = handle
        self.lock = threading.Lock()
        self.open = True
        self.events: list[MemoryEvent] = []
        self.summaries: list[Any] = []
        self.trace_index = 0


class SessionRegistry:
    """Open/closed session table shared by memory and the tracer."""

    def __init__(self, id_factory: Callable[[], str] = random_id):
        self._ids = id_factory
        self._lock = threading.Lock()
        self._sessions: dict[str, _Session] = {}

    def open(self, agent_name: str, task_id: str) -> SessionHandle:
        with self._lock:
            while True:
                sid = self._ids()
                if sid not in self._sessions:
                    break
            handle = SessionHandle(sid, agent_name, task_id)
            self._sessions[sid] = _Session(handle)
            return handle

    def close(self, handle: SessionHandle | str) -> None:
        s = self.session(handle)
        with s.lock:
            s.open = False

    def session(self, handle: SessionHandle | str) -> _Session:
        sid = handle if isinstance(handle, str) else handle.session_id
        with self._lock:
            s = self._sessions.get(sid)
        if s is None:
            raise NotFound(f"unknown session {sid!r}")
        return s

    def find(self, session_id: str) -> _Session | None:
        with self._lock:
            return self._sessions.get(session_id)

    def is_open(self, handle: SessionHandle | str) -> bool:
        s = self.find(handle if isinstance(handle, str) else handle.session_id)
        return s is not None and s.open

    def require_open(self, handle: SessionHandle | str) -> _Session:
        s = self.session(handle)
        if not s.open:
            raise LifecycleViolation(f"session {s.handle.session_id!r} is closed")
        return s

    def handles(self) -> list[SessionHandle]:
        with self._lock:
            return [s.handle for s in self._sessions.values()]


class MemoryManager:
    def __init__(
        self,
        sessions: SessionRegistry,
        clock: Clock | None = None,
        summarize: Callable[[SessionHandle, Sequence[MemoryEvent]], Any] = count_kinds,
        summary_every: int = SUMMARY_EVERY,
    ):
        self.sessions = sessions
        self.clock = clock or SystemClock()
        self.summarize = summarize
        self.summary_every = summary_every

    def open(self, agent_name: str, task_id: str) -> SessionHandle:
        return self.sessions.open(agent_name, task_id)

    def close(self, handle: SessionHandle | str) -> None:
        self.sessions.close(handle)

    def record(self, handle: SessionHandle | str, kind: str, payload: Any = None) -> MemoryEvent:
        canonical.check_structured(payload)
        s = self.sessions.session(handle)
        with s.lock:
            if not s.open:
                raise LifecycleViolation(f"session {s.handle.session_id!r} is closed")
            event = MemoryEvent(s.handle.session_id, len(s.events) + 1, kind, payload, self.clock.now())
            s.events.append(event)
            if self.summary_every and event.step % self.summary_every == 0:
                s.summaries.append(self.summarize(s.handle, s.events[-self.summary_every:]))
            return event

    def events(self, handle: SessionHandle | str) -> list[MemoryEvent]:
        s = self.sessions.find(handle if isinstance(handle, str) else handle.session_id)
        if s is None:
            return []
        with s.lock:
            return list(s.events)

    def summaries(self, handle: SessionHandle | str) -> list[Any]:
        s = self.sessions.find(handle if isinstance(handle, str) else handle.session_id)
        if s is None:
            return []
        with s.lock:
            return list(s.summaries)
