"""The runtime: one process-wide bundle of registries, managers and indexes."""
from __future__ import annotations

import contextlib
import contextvars
import os
import threading
from pathlib import Path
from typing import Any, Callable, Iterator

from . import canonical
from .agents import AgentRegistry
from .behaviors import BehaviorRegistry, install_builtins
from .environments import EnvironmentRegistry
from .errors import LifecycleViolation, TEAError
from .evolution import EvolutionManager
from .managers.memory import MemoryManager, SessionHandle, SessionRegistry
from .managers.model import ModelManager
from .managers.prompts import PromptRegistry
from .managers.solutions import MemoryComponentRegistry
from .managers.tracer import Tracer
from .persistence import fsync_dir, read_manifest, write_manifest
from .registry import ComponentRegistry
from .retrieval import HashingEmbedder, VectorIndex, build_routing_tree, category_of, route
from .retrieval.routing import RoutingTree
from .tools import ToolRegistry
from .transforms import TransformManager, install_transform_behaviors
from .types import ComponentKind
from .util import Clock, SystemClock, random_id
from .versioning import VersionManager

DATA_DIR_ENV = "TEA_DATA_DIR"
RELATIONS_MANIFEST = "relations.manifest"
TRACE_DIR = "traces"

_current_session: contextvars.ContextVar[SessionHandle | str | None] = contextvars.ContextVar("tea_session", default=None)


class _Trace:
    __slots__ = ("session", "outcome")

    def __init__(self, session):
        self.session = session
        self.outcome: Any = None


def default_data_dir() -> Path | None:
    value = os.environ.get(DATA_DIR_ENV)
    return Path(value) if value else None


class Runtime:
    def __init__(
        self,
        clock: Clock | None = None,
        id_factory: Callable[[], str] = random_id,
        behaviors: BehaviorRegistry | None = None,
    ):
        self.clock = clock or SystemClock()
        self.lock = threading.RLock()
        self.versions = VersionManager(self.clock)
        self.index = VectorIndex(HashingEmbedder())
        self.behaviors = behaviors or install_builtins(BehaviorRegistry())
        install_transform_behaviors(self.behaviors)
        self.sessions = SessionRegistry(id_factory)
        self.memory = MemoryManager(self.sessions, self.clock)
        self.tracer = Tracer(self.sessions, self.clock, id_factory)
        self.model = ModelManager()
        self.tools = ToolRegistry(self)
        self.environments = EnvironmentRegistry(self)
        self.agents = AgentRegistry(self)
        self.prompts = PromptRegistry(self)
        self.solutions = MemoryComponentRegistry(self)
        self.transforms = TransformManager(self)
        self.evolution = EvolutionManager(self)
        self._registries: dict[ComponentKind, ComponentRegistry] = {
            r.kind: r for r in (self.tools, self.environments, self.agents, self.prompts, self.solutions)
        }

    def registry(self, kind: ComponentKind | str) -> ComponentRegistry:
        return self._registries[ComponentKind.parse(kind)]

    @property
    def registries(self) -> list[ComponentRegistry]:
        return list(self._registries.values())

    # -- sessions and tracing ---------------------------------------------------

    @contextlib.contextmanager
    def session(self, agent_name: str, task_id: str) -> Iterator[SessionHandle]:
        """Open a session, make it current for nested invocations, close it on exit."""
        handle = self.memory.open(agent_name, task_id)
        token = _current_session.set(handle)
        try:
            yield handle
        finally:
            _current_session.reset(token)
            self.memory.close(handle)

    @contextlib.contextmanager
    def session_scope(self, handle: SessionHandle | str | None) -> Iterator[None]:
        token = _current_session.set(handle)
        try:
            yield
        finally:
            _current_session.reset(token)

    @staticmethod
    def current_session() -> SessionHandle | str | None:
        return _current_session.get()

    @contextlib.contextmanager
    def tracing(self, kind: str, name: str, args: Any, session=None) -> Iterator[_Trace]:
        """Wrap one invocation; emits exactly one trace record when a session applies."""
        handle = session if session is not None else _current_session.get()
        if handle is not None:
            self.sessions.require_open(handle)
        trace = _Trace(handle)
        token = _current_session.set(handle)
        try:
            yield trace
        except TEAError as exc:
            trace.outcome = {"ok": False, "error": exc.to_dict()}
            raise
        except BaseException as exc:
            trace.outcome = {"ok": False, "error": {"kind": "BackendFailure", "detail": f"{type(exc).__name__}: {exc}", "reasons": []}}
            raise
        finally:
            _current_session.reset(token)
            if handle is not None:
                invocation = {
                    "kind": kind,
                    "name": name,
                    "args": args if canonical.is_structured(args) else repr(args),
                    "outcome": trace.outcome if canonical.is_structured(trace.outcome) else repr(trace.outcome),
                }
                with contextlib.suppress(LifecycleViolation):
                    self.tracer.record(handle, None, invocation)

    # -- routing ------------------------------------------------------------------

    def routing_tree(self, kind: ComponentKind | str, branching: int = 4) -> RoutingTree:
        reg = self.registry(kind)
        with self.lock:
            items = [
                (name, category_of(name, reg.info(name).descriptor.metadata), self.index.vector(reg.kind, name))
                for name in reg.list()
            ]
        return build_routing_tree(items, branching)

    def route(self, kind: ComponentKind | str, query: str, branching: int = 4) -> tuple[str, int]:
        return route(self.routing_tree(kind, branching), self.index.embed(query))

    # -- persistence ----------------------------------------------------------------

    def dump_all(self) -> dict[str, dict]:
        """Every manifest's content, keyed by file name, taken under one lock."""
        with self.lock:
            out = {reg.manifest_name: reg.dump() for reg in self.registries}
            out[RELATIONS_MANIFEST] = self.agents.relations.dump()
            out[self.transforms.manifest_name] = self.transforms.dump()
            out[self.evolution.manifest_name] = self.evolution.dump()
        return out

    def save_all(self, data_dir=None) -> Path:
        root = Path(data_dir) if data_dir is not None else default_data_dir()
        if root is None:
            raise ValueError(f"no data directory given and {DATA_DIR_ENV} is unset")
        root.mkdir(parents=True, exist_ok=True)
        for fname, content in sorted(self.dump_all().items()):
            write_manifest(root / fname, content, sync_dir=False)
        fsync_dir(root)
        self.tracer.save_sessions(root / TRACE_DIR)
        return root

    def load_all(self, data_dir=None) -> Path:
        """Replace state with the manifests found under ``data_dir``; absent files mean empty."""
        root = Path(data_dir) if data_dir is not None else default_data_dir()
        if root is None:
            raise ValueError(f"no data directory given and {DATA_DIR_ENV} is unset")

        def read(fname: str) -> dict | None:
            path = root / fname
            return read_manifest(path) if path.exists() else None

        with self.lock:
            for reg in self.registries:
                data = read(reg.manifest_name)
                reg.restore_dump(data if data is not None else {"kind": reg.kind.value, "active": {}, "history": []})
            self.agents.relations.restore_dump(read(RELATIONS_MANIFEST) or {})
            self.transforms.restore_dump(read(self.transforms.manifest_name) or {})
            self.evolution.restore_dump(read(self.evolution.manifest_name) or {})
        traces = root / TRACE_DIR
        if traces.is_dir():
            for log in sorted(traces.glob("*.log")):
                self.tracer.load(log)
        return root

    def snapshot(self) -> bytes:
        """Canonical bytes of every registry, history and the retrieval index."""
        with self.lock:
            state = self.dump_all()
            state["index"] = self.index.snapshot()
        return canonical.encode_bytes(state)


__all__ = ["DATA_DIR_ENV", "Runtime", "default_data_dir"]
