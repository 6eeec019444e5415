"""Environment Context Protocol: stateful environments with declared action spaces."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Callable, Mapping, Sequence

from . import canonical
from .errors import ActionNotFound, BackendFailure, TEAError, ValidationFailed
from .registry import ComponentRegistry
from .schema import ParamSpec, check_args, coerce_params, synthesize_representations
from .types import (
    INITIAL_VERSION,
    ComponentConfig,
    ComponentKind,
    Descriptor,
    Representations,
    Version,
    check_segment,
    validate_descriptor,
)
from .versioning import BumpLevel


@dataclass(frozen=True)
class ActionDecl:
    name: str
    params: Sequence[ParamSpec] = ()
    doc: str = ""
    open_args: bool = False

    def __post_init__(self):
        object.__setattr__(self, "params", coerce_params(self.params))

    def representations(self, env_name: str) -> Representations:
        desc = Descriptor(name=self.name, description=self.doc or f"{self.name} action of {env_name}")
        return synthesize_representations(desc, self.params, self.open_args)

    def to_dict(self, env_name: str) -> dict:
        return {
            "name": self.name,
            "doc": self.doc,
            "params": [p.to_dict() for p in self.params],
            "open_args": self.open_args,
            "representations": self.representations(env_name).to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ActionDecl:
        return cls(data["name"], [ParamSpec.from_dict(p) for p in data.get("params", ())], data.get("doc", ""), bool(data.get("open_args", False)))


@dataclass(frozen=True)
class EnvironmentSpec:
    """Declaration of an environment.

    The behavior factory under ``behavior_id`` produces the instance that
    provides state retrieval (``state()``) and action execution
    (``step(action, args)``). Passing ``factory`` registers a zero-argument
    constructor under that id.
    """

    descriptor: Descriptor
    actions: Sequence[ActionDecl] = ()
    behavior_id: str | None = None
    source: str = ""
    factory: Callable[[], Any] | None = field(default=None, compare=False)

    @property
    def resolved_behavior_id(self) -> str | None:
        return self.behavior_id or self.descriptor.metadata.get("behavior_id") or (
            self.descriptor.name if self.factory is not None else None
        )


@dataclass(frozen=True)
class EnvironmentConfig:
    """View of an environment's ComponentConfig with its action space and rules."""

    base: ComponentConfig
    actions: tuple[ActionDecl, ...]
    rules: str

    @classmethod
    def of(cls, config: ComponentConfig) -> EnvironmentConfig:
        actions = tuple(ActionDecl.from_dict(a) for a in config.extra.get("actions", ()))
        return cls(config, actions, config.extra.get("rules", ""))

    @property
    def name(self) -> str:
        return self.base.name

    @property
    def version(self) -> Version:
        return self.base.version

    def action(self, name: str) -> ActionDecl:
        for a in self.actions:
            if a.name == name:
                return a
        raise ActionNotFound(f"environment {self.name!r} has no action {name!r}")

    def action_names(self) -> list[str]:
        return [a.name for a in self.actions]


def spec_of(config: ComponentConfig) -> EnvironmentSpec:
    env = EnvironmentConfig.of(config)
    return EnvironmentSpec(config.descriptor, env.actions, config.behavior_id, config.source)


def check_actions(actions: Sequence[ActionDecl]) -> None:
    reasons = []
    seen = set()
    for a in actions:
        try:
            check_segment(a.name, "action name")
        except ValidationFailed as exc:
            reasons.extend(exc.reasons)
        if a.name in seen:
            reasons.append(f"duplicate action {a.name!r}")
        seen.add(a.name)
    if reasons:
        raise ValidationFailed("invalid action space", reasons)


def generate_rules(spec: EnvironmentSpec) -> str:
    d = spec.descriptor
    lines = [f"Environment {d.name}: {d.description}", "", "Actions:"]
    if not spec.actions:
        lines.append("(no actions)")
    for a in spec.actions:
        lines.append(f"* {a.name}: {a.doc or 'no description'}")
        for p in a.params:
            flag = "required" if p.required else "optional"
            lines.append(f"    - {p.name} ({p.type}, {flag})" + (f": {p.doc}" if p.doc else ""))
        if a.open_args:
            lines.append("    - accepts additional named arguments")
    lines += ["", "State: query the current observation with the state operation; it never changes the environment."]
    return "\n".join(lines)


def _environment_representations(spec: EnvironmentSpec) -> Representations:
    reps = synthesize_representations(spec.descriptor, ())
    call = dict(reps.call_schema)
    call["actions"] = [a.representations(spec.descriptor.name).call_schema for a in spec.actions]
    return replace(reps, call_schema=call)


class EnvironmentRegistry(ComponentRegistry):
    kind = ComponentKind.ENVIRONMENT
    manifest_name = "environments.manifest"

    def build_config(self, spec: EnvironmentSpec, version: Version = INITIAL_VERSION) -> ComponentConfig:
        validate_descriptor(spec.descriptor).raise_for_failure(f"invalid environment descriptor {spec.descriptor.name!r}")
        check_actions(spec.actions)
        behavior_id = spec.resolved_behavior_id
        if spec.factory is not None:
            self.runtime.behaviors.environment(behavior_id, spec.factory)
        descriptor = spec.descriptor
        if behavior_id is not None:
            descriptor = descriptor.with_metadata(behavior_id=behavior_id)
        return ComponentConfig(
            kind=self.kind,
            descriptor=descriptor,
            version=version,
            source=spec.source,
            representations=_environment_representations(spec),
            extra={
                "actions": [a.to_dict(descriptor.name) for a in spec.actions],
                "rules": generate_rules(spec),
            },
        )

    def instantiate(self, config: ComponentConfig):
        factory = self.runtime.behaviors.resolve("environment", config.behavior_id)
        return None if factory is None else factory(self.runtime, config)

    def needs_instance(self, config: ComponentConfig) -> bool:
        return True

    def contract_text(self, config: ComponentConfig) -> str:
        return config.extra.get("rules", "")

    def copy(self, name: str, new_name: str) -> ComponentConfig:
        # rebuilt from the declaration so the rules text names the copy
        with self.lock:
            spec = spec_of(self.info(name))
            spec = replace(spec, descriptor=spec.descriptor.with_name(new_name))
            return self.register_config(self.build_config(spec))

    def register(self, spec: EnvironmentSpec) -> EnvironmentConfig:
        with self.lock:
            return EnvironmentConfig.of(self.register_config(self.build_config(spec)))

    def update(self, name: str, spec: EnvironmentSpec, level: BumpLevel | str = BumpLevel.PATCH) -> EnvironmentConfig:
        with self.lock:
            self.entry(name)
            spec = replace(spec, descriptor=spec.descriptor.with_name(name))
            cfg = self.build_config(spec)
            return EnvironmentConfig.of(self.commit(name, lambda _current: cfg, level))

    def env_config(self, name: str) -> EnvironmentConfig:
        return EnvironmentConfig.of(self.info(name))

    def copy_environment(self, name: str, new_name: str) -> EnvironmentConfig:
        return EnvironmentConfig.of(self.copy(name, new_name))

    def restore_environment(self, name: str, version) -> EnvironmentConfig:
        return EnvironmentConfig.of(self.restore(name, version))

    def state(self, name: str) -> Any:
        entry = self.live(name)
        with entry.lock:
            try:
                value = entry.instance.state()
            except TEAError:
                raise
            except Exception as exc:  # noqa: BLE001
                raise BackendFailure(f"state of {name!r} failed: {type(exc).__name__}: {exc}") from exc
        canonical.check_structured(value)
        return value

    def invoke(self, name: str, action: str, args: dict | None = None, session=None) -> Any:
        args = {} if args is None else args
        with self.runtime.tracing("environment", f"{name}.{action}", args, session) as trace:
            entry = self.live(name)
            decl = EnvironmentConfig.of(entry.config).action(action)
            check_args(decl.representations(name).argument_schema, args)
            canonical.check_structured(args)
            with entry.lock:
                try:
                    result = entry.instance.step(action, dict(args))
                except TEAError:
                    raise
                except Exception as exc:  # noqa: BLE001
                    raise BackendFailure(f"action {name}.{action} failed: {type(exc).__name__}: {exc}") from exc
            canonical.check_structured(result)
            trace.outcome = {"ok": True, "output": result}
            return result


def counter_spec(name: str = "counter", evolvable: bool = False) -> EnvironmentSpec:
    return EnvironmentSpec(
        Descriptor(name, "integer counter that can be incremented and reset", {"category": "builtin"}, evolvable),
        actions=[
            ActionDecl("increment", [ParamSpec("by", "integer", False, "amount to add, default 1")], "add to the counter"),
            ActionDecl("reset", [], "set the counter back to zero"),
        ],
        behavior_id="counter",
        source="class Counter: ...",
    )


def kvstore_spec(name: str = "kvstore", evolvable: bool = False) -> EnvironmentSpec:
    key = ParamSpec("key", "text", True, "entry key")
    return EnvironmentSpec(
        Descriptor(name, "in-memory key value store with get put and delete", {"category": "builtin"}, evolvable),
        actions=[
            ActionDecl("get", [key], "read an entry"),
            ActionDecl("put", [key, ParamSpec("value", "text", True, "entry value")], "write an entry"),
            ActionDecl("delete", [key], "remove an entry"),
        ],
        behavior_id="kvstore",
        source="class KVStore: ...",
    )


def scripted_web_spec(name: str = "scripted_web", evolvable: bool = False) -> EnvironmentSpec:
    return EnvironmentSpec(
        Descriptor(name, "deterministic web page graph for navigation click and read", {"category": "builtin"}, evolvable),
        actions=[
            ActionDecl("navigate", [ParamSpec("page", "text", True, "page id")], "open a page by id"),
            ActionDecl("click", [ParamSpec("index", "integer", True, "link position")], "follow a link on the current page"),
            ActionDecl("read", [], "read the current page"),
        ],
        behavior_id="scripted_web",
        source="class ScriptedWeb: ...",
    )
