"""Execution tracer: per-session indexed records, queries, and locked persistence."""
from __future__ import annotations

import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterable

from .. import canonical
from ..errors import NotFound, PersistenceError, ProtocolError, ValidationFailed
from ..persistence import atomic_write, fsync_dir, read_bytes
from ..util import Clock, SystemClock, random_id
from .memory import SessionHandle, SessionRegistry


@dataclass(frozen=True)
class TraceRecord:
    record_id: str
    session_id: str
    task_id: str
    index: int
    observation: Any
    invocation: Any
    at: float

    def to_dict(self) -> dict:
        return {
            "record_id": self.record_id,
            "session_id": self.session_id,
            "task_id": self.task_id,
            "index": self.index,
            "observation": self.observation,
            "invocation": self.invocation,
            "at": self.at,
        }

    @classmethod
    def from_dict(cls, d) -> TraceRecord:
        return cls(d["record_id"], d["session_id"], d["task_id"], int(d["index"]), d.get("observation"), d.get("invocation"), float(d["at"]))


def encode_records(records: Iterable[TraceRecord]) -> bytes:
    return "".join(canonical.encode(r.to_dict()) for r in records).encode("utf-8")


def decode_records(data: bytes) -> list[TraceRecord]:
    out = []
    for n, line in enumerate(data.decode("utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            out.append(TraceRecord.from_dict(canonical.decode(line)))
        except (ProtocolError, KeyError, TypeError, ValueError) as exc:
            raise PersistenceError(f"corrupt trace line {n}: {exc}") from exc
    return out


class Tracer:
    def __init__(self, sessions: SessionRegistry, clock: Clock | None = None, id_factory: Callable[[], str] = random_id):
        self.sessions = sessions
        self.clock = clock or SystemClock()
        self._ids = id_factory
        self._lock = threading.Lock()
        self._by_session: dict[str, list[TraceRecord]] = {}
        self._by_id: dict[str, TraceRecord] = {}

    def record(self, handle: SessionHandle | str, observation: Any = None, invocation: Any = None) -> TraceRecord:
        canonical.check_structured(observation)
        canonical.check_structured(invocation)
        s = self.sessions.require_open(handle)
        with s.lock:
            s.trace_index += 1
            index = s.trace_index
            with self._lock:
                rid = self._ids()
                while rid in self._by_id:
                    rid = self._ids()
                rec = TraceRecord(rid, s.handle.session_id, s.handle.task_id, index, observation, invocation, self.clock.now())
                self._by_session.setdefault(rec.session_id, []).append(rec)
                self._by_id[rid] = rec
        return rec

    def query(
        self,
        session_id: str | None = None,
        task_id: str | None = None,
        record_id: str | None = None,
        index: int | None = None,
    ) -> list[TraceRecord]:
        """Records matching every given key, in (session, index) order.

        ``index`` needs ``session_id``; an unknown ``record_id`` raises NotFound.
        """
        if index is not None and session_id is None:
            raise ValidationFailed("query by index requires a session_id")
        with self._lock:
            if record_id is not None:
                rec = self._by_id.get(record_id)
                if rec is None:
                    raise NotFound(f"no trace record {record_id!r}")
                pool = [rec]
            elif session_id is not None:
                pool = list(self._by_session.get(session_id, ()))
            else:
                pool = [r for recs in self._by_session.values() for r in recs]
        out = [
            r
            for r in pool
            if (session_id is None or r.session_id == session_id)
            and (task_id is None or r.task_id == task_id)
            and (index is None or r.index == index)
        ]
        out.sort(key=lambda r: (r.session_id, r.index))
        return out

    def all_records(self) -> list[TraceRecord]:
        return self.query()

    def save(self, path, session_id: str | None = None, sync_dir: bool = True) -> None:
        records = self.query(session_id=session_id) if session_id else self.all_records()
        atomic_write(path, encode_records(records), sync_dir)

    def save_sessions(self, directory) -> list[Path]:
        """One ``<session_id>.log`` file per session."""
        directory = Path(directory)
        with self._lock:
            sids = sorted(self._by_session)
        written = []
        for sid in sids:
            path = directory / f"{sid}.log"
            self.save(path, sid, sync_dir=False)
            written.append(path)
        if written:
            fsync_dir(directory)
        return written

    def load(self, path) -> list[TraceRecord]:
        """Merge records from a trace file; replaces records with the same id."""
        records = decode_records(read_bytes(path))
        with self._lock:
            for rec in records:
                old = self._by_id.get(rec.record_id)
                recs = self._by_session.setdefault(rec.session_id, [])
                if old is not None:
                    recs.remove(old)
                recs.append(rec)
                recs.sort(key=lambda r: r.index)
                self._by_id[rec.record_id] = rec
        for rec in records:
            s = self.sessions.find(rec.session_id)
            if s is not None:
                with s.lock:
                    s.trace_index = max(s.trace_index, rec.index)
        return records


def load_trace_file(path) -> list[TraceRecord]:
    return decode_records(read_bytes(path))
