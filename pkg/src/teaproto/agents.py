"""Agent Context Protocol: agent registry, policies, invocation and relationships."""
from __future__ import annotations

import enum
import threading
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Sequence

from . import canonical
from .errors import BackendFailure, NotFound, TEAError, ValidationFailed
from .registry import ComponentRegistry
from .schema import ParamSpec, coerce_params, synthesize_representations
from .types import INITIAL_VERSION, ComponentConfig, ComponentKind, Descriptor, Version, validate_descriptor
from .versioning import BumpLevel


class RelationKind(str, enum.Enum):
    HIERARCHICAL = "hierarchical"
    COOPERATIVE = "cooperative"
    COMPETITIVE = "competitive"


@dataclass(frozen=True, order=True)
class RelationEdge:
    source: str
    target: str
    kind: RelationKind

    def to_dict(self) -> dict:
        return {"from": self.source, "to": self.target, "kind": self.kind.value}

    @classmethod
    def from_dict(cls, data) -> RelationEdge:
        try:
            return cls(data["from"], data["to"], RelationKind(data["kind"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationFailed(f"malformed relation edge: {exc}") from None


@dataclass(frozen=True)
class AgentSpec:
    """Declaration of an agent; ``policy`` registers a callable(task, ctx) under ``behavior_id``.

    Agents accept any task by default (``open_args``); ``params`` documents the
    expected task fields for the generated representations.
    """

    descriptor: Descriptor
    behavior_id: str | None = None
    source: str = ""
    params: Sequence[ParamSpec] = ()
    open_args: bool = True
    reentrant: bool = False
    policy: Callable[[Any, Any], Any] | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "params", coerce_params(self.params))

    @property
    def resolved_behavior_id(self) -> str | None:
        return self.behavior_id or self.descriptor.metadata.get("behavior_id") or (
            self.descriptor.name if self.policy is not None else None
        )


class RelationStore:
    """Typed edges between agents; the hierarchical edges always form a forest."""

    def __init__(self):
        self._lock = threading.RLock()
        self._edges: set[RelationEdge] = set()

    def parent(self, name: str) -> str | None:
        with self._lock:
            for e in self._edges:
                if e.kind is RelationKind.HIERARCHICAL and e.target == name:
                    return e.source
        return None

    def children(self, name: str) -> list[str]:
        with self._lock:
            return sorted(e.target for e in self._edges if e.kind is RelationKind.HIERARCHICAL and e.source == name)

    def _reaches(self, start: str, goal: str) -> bool:
        stack, seen = [start], set()
        while stack:
            node = stack.pop()
            if node == goal:
                return True
            if node in seen:
                continue
            seen.add(node)
            stack.extend(self.children(node))
        return False

    def add(self, edge: RelationEdge) -> bool:
        """Insert an edge; returns False if it was already present."""
        with self._lock:
            if edge in self._edges:
                return False
            if edge.kind is RelationKind.HIERARCHICAL:
                if edge.source == edge.target or self._reaches(edge.target, edge.source):
                    raise ValidationFailed(f"hierarchical edge {edge.source}->{edge.target} would create a cycle")
                parent = self.parent(edge.target)
                if parent is not None:
                    raise ValidationFailed(f"{edge.target!r} already has hierarchical parent {parent!r}")
            self._edges.add(edge)
            return True

    def query(self, name: str, kind: RelationKind | str | None = None) -> list[RelationEdge]:
        kind = None if kind is None else RelationKind(kind)
        with self._lock:
            return sorted(
                e for e in self._edges if name in (e.source, e.target) and (kind is None or e.kind is kind)
            )

    def remove_incident(self, name: str) -> int:
        with self._lock:
            doomed = {e for e in self._edges if name in (e.source, e.target)}
            self._edges -= doomed
            return len(doomed)

    def edges(self) -> list[RelationEdge]:
        with self._lock:
            return sorted(self._edges)

    def dump(self) -> dict:
        return {"edges": [e.to_dict() for e in self.edges()]}

    def restore_dump(self, data: dict) -> None:
        edges = [RelationEdge.from_dict(e) for e in data.get("edges", ())]
        with self._lock:
            self._edges.clear()
            for e in edges:
                self.add(e)


class AgentContext:
    """Handle given to policies: access to tools, environments, agents and session memory."""

    def __init__(self, runtime, session=None):
        self.runtime = runtime
        self.session = session

    def call_tool(self, name: str, args: dict) -> Any:
        return self.runtime.tools.call(name, args, session=self.session)

    def invoke_action(self, env: str, action: str, args: dict | None = None) -> Any:
        return self.runtime.environments.invoke(env, action, args or {}, session=self.session)

    def env_state(self, env: str) -> Any:
        return self.runtime.environments.state(env)

    def invoke_agent(self, name: str, task: Any) -> Any:
        return self.runtime.agents.invoke(name, task, session=self.session)

    def remember(self, kind: str, payload: Any):
        if self.session is None:
            raise ValidationFailed("no session attached to this agent context")
        return self.runtime.memory.record(self.session, kind, payload)


class AgentRegistry(ComponentRegistry):
    kind = ComponentKind.AGENT
    manifest_name = "agents.manifest"

    def __init__(self, runtime):
        super().__init__(runtime)
        self.relations = RelationStore()

    def build_config(self, spec: AgentSpec, version: Version = INITIAL_VERSION) -> ComponentConfig:
        validate_descriptor(spec.descriptor).raise_for_failure(f"invalid agent descriptor {spec.descriptor.name!r}")
        behavior_id = spec.resolved_behavior_id
        if spec.policy is not None:
            self.runtime.behaviors.agent(behavior_id, spec.policy)
        meta = {}
        if behavior_id is not None:
            meta["behavior_id"] = behavior_id
        if spec.reentrant:
            meta["reentrant"] = "true"
        return ComponentConfig(
            kind=self.kind,
            descriptor=spec.descriptor.with_metadata(**meta),
            version=version,
            source=spec.source,
            representations=synthesize_representations(spec.descriptor, spec.params, spec.open_args),
        )

    def instantiate(self, config: ComponentConfig):
        factory = self.runtime.behaviors.resolve("agent", config.behavior_id)
        return None if factory is None else factory(self.runtime, config)

    def needs_instance(self, config: ComponentConfig) -> bool:
        return True

    def on_unregister(self, name: str) -> None:
        self.relations.remove_incident(name)

    def register(self, spec: AgentSpec) -> ComponentConfig:
        with self.lock:
            return self.register_config(self.build_config(spec))

    def update(self, name: str, spec: AgentSpec, level: BumpLevel | str = BumpLevel.PATCH) -> ComponentConfig:
        with self.lock:
            self.entry(name)
            spec = replace(spec, descriptor=spec.descriptor.with_name(name))
            cfg = self.build_config(spec)
            return self.commit(name, lambda _current: cfg, level)

    def invoke(self, name: str, task: Any = None, session=None) -> Any:
        with self.runtime.tracing("agent", name, task, session) as trace:
            entry = self.live(name)
            canonical.check_structured(task)
            ctx = AgentContext(self.runtime, trace.session)
            reentrant = entry.config.descriptor.metadata.get("reentrant") == "true"
            if reentrant:
                result = self._run(name, entry.instance, task, ctx)
            else:
                with entry.lock:
                    result = self._run(name, entry.instance, task, ctx)
            canonical.check_structured(result)
            trace.outcome = {"ok": True, "output": result}
            return result

    @staticmethod
    def _run(name, policy, task, ctx):
        try:
            return policy(task, ctx)
        except TEAError:
            raise
        except Exception as exc:  # noqa: BLE001
            raise BackendFailure(f"agent {name!r} failed: {type(exc).__name__}: {exc}") from exc

    def add_relation(self, edge: RelationEdge) -> bool:
        with self.lock:
            for endpoint in (edge.source, edge.target):
                if endpoint not in self:
                    raise NotFound(f"agent {endpoint!r} is not registered")
            return self.relations.add(edge)

    def query_relations(self, name: str, kind: RelationKind | str | None = None) -> list[RelationEdge]:
        return self.relations.query(name, kind)
