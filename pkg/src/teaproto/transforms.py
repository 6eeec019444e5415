"""The six typed transformations between tools, environments and agents.

Derived components are ordinary registry entries whose behavior delegates to
the source. Their descriptors carry ``transform`` and ``derived_from`` metadata
so lineage survives persistence, and ``check_well_typed`` can recompute the
expected argument schema from the source.
"""
from __future__ import annotations

import enum
import threading
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Mapping, Sequence

from .agents import AgentSpec
from .environments import ActionDecl, EnvironmentConfig, EnvironmentSpec
from .errors import NameConflict, NotFound, ValidationFailed
from .schema import ParamSpec, argument_schema, params_of, signature
from .tools import ToolSpec
from .types import ComponentKind, Descriptor, ValidationResult, check_name

if TYPE_CHECKING:
    from .runtime import Runtime


class TransformKind(str, enum.Enum):
    A2T = "A2T"
    T2A = "T2A"
    E2T = "E2T"
    T2E = "T2E"
    A2E = "A2E"
    E2A = "E2A"

    @property
    def source(self) -> ComponentKind:
        return _LETTER[self.value[0]]

    @property
    def target(self) -> ComponentKind:
        return _LETTER[self.value[2]]


_LETTER = {"A": ComponentKind.AGENT, "T": ComponentKind.TOOL, "E": ComponentKind.ENVIRONMENT}

TASK_ARGS_SCHEMA = argument_schema([ParamSpec("args", "mapping", True, "arguments for the tool")])


@dataclass(frozen=True)
class Toolkit:
    source: str
    tools: tuple[str, ...]
    shared_state_ref: str | None = None

    def to_dict(self) -> dict:
        return {"source": self.source, "tools": list(self.tools), "shared_state_ref": self.shared_state_ref}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> Toolkit:
        try:
            return cls(data["source"], tuple(data["tools"]), data.get("shared_state_ref"))
        except (KeyError, TypeError) as exc:
            raise ValidationFailed(f"malformed toolkit: {exc}") from None


@dataclass(frozen=True)
class TransformRecord:
    kind: str
    input: str
    outputs: tuple[str, ...]
    created_at: float
    consumed: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if not self.consumed:
            object.__setattr__(self, "consumed", (self.input,))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "input": self.input,
            "outputs": list(self.outputs),
            "consumed": list(self.consumed),
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> TransformRecord:
        try:
            return cls(
                str(data["kind"]),
                data["input"],
                tuple(data.get("outputs", ())),
                float(data.get("created_at", 0.0)),
                tuple(data.get("consumed", ())),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationFailed(f"malformed transform record: {exc}") from None


def short_name(tool: str) -> str:
    return tool.rsplit(".", 1)[-1]


# -- delegating behaviors -------------------------------------------------------


def _a2t_factory(runtime: Runtime, config):
    agent = config.descriptor.metadata["derived_from"]
    return lambda args: runtime.agents.invoke(agent, args)


def _e2t_factory(runtime: Runtime, config):
    meta = config.descriptor.metadata
    env, action = meta["derived_from"], meta["action"]
    return lambda args: runtime.environments.invoke(env, action, args)


def _t2a_factory(runtime: Runtime, config):
    tool = config.descriptor.metadata["derived_from"]

    def policy(task, ctx):
        if not isinstance(task, dict) or not isinstance(task.get("args"), dict):
            raise ValidationFailed("task must be a mapping with an 'args' mapping", ["missing args"])
        return ctx.call_tool(tool, task["args"])

    return policy


def _e2a_factory(runtime: Runtime, config):
    meta = config.descriptor.metadata
    env, policy_id = meta["derived_from"], meta["policy_id"]

    def policy(task, ctx):
        choose = runtime.behaviors.resolve("policy", policy_id)
        if choose is None:
            raise ValidationFailed(f"unknown policy {policy_id!r}")
        actions = runtime.environments.env_config(env).action_names()
        action, args = choose(runtime, config)(runtime.environments.state(env), actions)
        result = ctx.invoke_action(env, action, args)
        return {"action": action, "result": result, "state": runtime.environments.state(env)}

    return policy


class ToolkitEnvironment:
    """Environment over a toolkit: each tool is an action; state counts calls."""

    def __init__(self, runtime: Runtime, actions: Mapping[str, str], shared_state_ref: str | None):
        self.runtime = runtime
        self.actions = dict(actions)
        self.shared_state_ref = shared_state_ref
        self.invocations = {a: 0 for a in sorted(actions)}

    def state(self):
        out = {"invocations": dict(self.invocations)}
        if self.shared_state_ref:
            out["shared_state"] = self.runtime.environments.state(self.shared_state_ref)
        return out

    def step(self, action, args):
        output = self.runtime.tools.call(self.actions[action], args)
        self.invocations[action] += 1
        return output


def _t2e_factory(runtime: Runtime, config):
    meta = config.descriptor.metadata
    tools = [t for t in meta.get("toolkit_tools", "").split(",") if t]
    return ToolkitEnvironment(runtime, {short_name(t): t for t in tools}, meta.get("shared_state_ref") or None)


class AgentEnvironment:
    """An agent presented as an environment with a single ``interact`` action."""

    def __init__(self, runtime: Runtime, agent: str):
        self.runtime = runtime
        self.agent = agent
        self.interactions = 0
        self.last_output = None

    def state(self):
        return {"interactions": self.interactions, "last_output": self.last_output}

    def step(self, action, args):
        output = self.runtime.agents.invoke(self.agent, args)
        self.interactions += 1
        self.last_output = output
        return output


def _a2e_factory(runtime: Runtime, config):
    return AgentEnvironment(runtime, config.descriptor.metadata["derived_from"])


def install_transform_behaviors(behaviors) -> None:
    behaviors.add("tool", "transform.a2t", _a2t_factory)
    behaviors.add("tool", "transform.e2t", _e2t_factory)
    behaviors.add("agent", "transform.t2a", _t2a_factory)
    behaviors.add("agent", "transform.e2a", _e2a_factory)
    behaviors.add("environment", "transform.t2e", _t2e_factory)
    behaviors.add("environment", "transform.a2e", _a2e_factory)


# -- the operators ----------------------------------------------------------------


class TransformManager:
    manifest_name = "transforms.manifest"

    def __init__(self, runtime: Runtime):
        self.runtime = runtime
        self._lock = threading.Lock()
        self._records: list[TransformRecord] = []

    @property
    def records(self) -> list[TransformRecord]:
        with self._lock:
            return list(self._records)

    def _log(self, kind: TransformKind, source: str, outputs: Sequence[str], consumed: Sequence[str] = ()) -> TransformRecord:
        rec = TransformRecord(kind.value, source, tuple(outputs), self.runtime.clock.now(), tuple(consumed))
        with self._lock:
            self._records.append(rec)
        return rec

    def _lineage(self, kind: TransformKind, source: str, base: Descriptor, **extra: str) -> dict:
        meta = {k: v for k, v in base.metadata.items() if k not in ("behavior_id", "reentrant")}
        meta.update(transform=kind.value, derived_from=source, **extra)
        return meta

    def a2t(self, agent: str) -> tuple[Any, TransformRecord]:
        rt = self.runtime
        with rt.lock:
            src = rt.agents.info(agent)
            schema = src.representations.argument_schema
            spec = ToolSpec(
                Descriptor(f"agent.{agent}", f"tool exposing agent {agent}: {src.descriptor.description}",
                           self._lineage(TransformKind.A2T, agent, src.descriptor), src.descriptor.evolvable),
                params=params_of(schema),
                behavior_id="transform.a2t",
                source=src.source,
                open_args=bool(schema.get("additional")),
            )
            cfg = rt.tools.register(spec)
            return cfg, self._log(TransformKind.A2T, agent, [cfg.name])

    def e2t(self, env: str) -> tuple[Toolkit, TransformRecord]:
        rt = self.runtime
        with rt.lock:
            src = rt.environments.env_config(env)
            names = [f"env.{env}.{a.name}" for a in src.actions]
            taken = [n for n in names if n in rt.tools or rt.versions.history(n, ComponentKind.TOOL)]
            if taken:
                raise NameConflict("toolkit names already registered", taken)
            for action, name in zip(src.actions, names):
                rt.tools.register(
                    ToolSpec(
                        Descriptor(name, action.doc or f"{action.name} action of {env}",
                                   self._lineage(TransformKind.E2T, env, src.base.descriptor, action=action.name)),
                        params=action.params,
                        behavior_id="transform.e2t",
                        open_args=action.open_args,
                    )
                )
            kit = Toolkit(env, tuple(names), env)
            return kit, self._log(TransformKind.E2T, env, names)

    def t2e(self, kit: Toolkit, name: str) -> tuple[EnvironmentConfig, TransformRecord]:
        rt = self.runtime
        check_name(name)
        if not kit.tools:
            raise ValidationFailed("toolkit is empty")
        with rt.lock:
            actions = []
            for tool in kit.tools:
                cfg = rt.tools.info(tool)
                schema = cfg.representations.argument_schema
                actions.append(ActionDecl(short_name(tool), params_of(schema), cfg.descriptor.description, bool(schema.get("additional"))))
            if kit.shared_state_ref is not None:
                rt.environments.entry(kit.shared_state_ref)
            meta = {
                "transform": TransformKind.T2E.value,
                "derived_from": kit.source,
                "toolkit_tools": ",".join(kit.tools),
                "shared_state_ref": kit.shared_state_ref or "",
            }
            spec = EnvironmentSpec(
                Descriptor(name, f"environment over toolkit {kit.source}: {', '.join(kit.tools)}", meta),
                actions=actions,
                behavior_id="transform.t2e",
            )
            env = rt.environments.register(spec)
            return env, self._log(TransformKind.T2E, kit.source, [name], kit.tools)

    def t2a(self, tool: str) -> tuple[Any, TransformRecord]:
        rt = self.runtime
        with rt.lock:
            src = rt.tools.info(tool)
            spec = AgentSpec(
                Descriptor(f"tool.{tool}", f"agent acting through tool {tool}: {src.descriptor.description}",
                           self._lineage(TransformKind.T2A, tool, src.descriptor), src.descriptor.evolvable),
                behavior_id="transform.t2a",
                source=src.source,
                params=params_of(TASK_ARGS_SCHEMA),
                open_args=False,
            )
            cfg = rt.agents.register(spec)
            return cfg, self._log(TransformKind.T2A, tool, [cfg.name])

    def a2e(self, agent: str) -> tuple[EnvironmentConfig, TransformRecord]:
        rt = self.runtime
        with rt.lock:
            src = rt.agents.info(agent)
            schema = src.representations.argument_schema
            spec = EnvironmentSpec(
                Descriptor(f"agent.{agent}.env", f"environment wrapping agent {agent}: {src.descriptor.description}",
                           self._lineage(TransformKind.A2E, agent, src.descriptor)),
                actions=[ActionDecl("interact", params_of(schema), f"send a task to agent {agent}", bool(schema.get("additional")))],
                behavior_id="transform.a2e",
            )
            env = rt.environments.register(spec)
            return env, self._log(TransformKind.A2E, agent, [env.name])

    def e2a(self, env: str, policy_id: str) -> tuple[Any, TransformRecord]:
        rt = self.runtime
        with rt.lock:
            src = rt.environments.info(env)
            if rt.behaviors.resolve("policy", policy_id) is None:
                raise ValidationFailed(f"unknown policy {policy_id!r}", [f"known: {', '.join(rt.behaviors.ids('policy'))}"])
            spec = AgentSpec(
                Descriptor(f"env.{env}.agent", f"agent driving environment {env} with policy {policy_id}: {src.descriptor.description}",
                           self._lineage(TransformKind.E2A, env, src.descriptor, policy_id=policy_id)),
                behavior_id="transform.e2a",
            )
            cfg = rt.agents.register(spec)
            return cfg, self._log(TransformKind.E2A, env, [cfg.name])

    # -- checking ---------------------------------------------------------------

    def _registry(self, kind: ComponentKind):
        return self.runtime.registry(kind)

    def check_well_typed(self, record: TransformRecord) -> ValidationResult:
        reasons: list[str] = []
        try:
            kind = TransformKind(record.kind)
        except ValueError:
            return ValidationResult(False, (f"unknown transform kind {record.kind!r}",))
        if not record.outputs:
            reasons.append("transform has no outputs")
        target = self._registry(kind.target)
        source = self._registry(kind.source)
        outputs = {}
        for out in record.outputs:
            if out not in target:
                reasons.append(f"output {out!r} not registered in {kind.target.value} registry")
            else:
                outputs[out] = target.info(out)
        for name in record.consumed:
            if name not in source:
                reasons.append(f"input {name!r} not registered in {kind.source.value} registry")
        if reasons:
            return ValidationResult(False, tuple(reasons))
        for out, cfg in outputs.items():
            meta = cfg.descriptor.metadata
            if meta.get("transform") != kind.value or meta.get("derived_from") != record.input:
                reasons.append(f"output {out!r} lacks {kind.value} lineage from {record.input!r}")
        if reasons:
            return ValidationResult(False, tuple(reasons))
        reasons.extend(self._schema_reasons(kind, record, outputs))
        return ValidationResult(not reasons, tuple(reasons))

    def _schema_reasons(self, kind: TransformKind, record: TransformRecord, outputs: dict) -> list[str]:
        rt = self.runtime
        reasons = []

        def expect(label: str, got, want):
            if signature(got) != signature(want):
                reasons.append(f"{label}: signature {signature(got)} does not match expected {signature(want)}")

        if kind is TransformKind.A2T:
            want = rt.agents.info(record.input).representations.argument_schema
            for out, cfg in outputs.items():
                expect(out, cfg.representations.argument_schema, want)
        elif kind is TransformKind.E2T:
            env = rt.environments.env_config(record.input)
            for out, cfg in outputs.items():
                try:
                    decl = env.action(cfg.descriptor.metadata.get("action", ""))
                except Exception:  # noqa: BLE001
                    reasons.append(f"{out}: source action missing")
                    continue
                expect(out, cfg.representations.argument_schema, decl.representations(env.name).argument_schema)
        elif kind is TransformKind.T2E:
            for out, cfg in outputs.items():
                env = EnvironmentConfig.of(cfg)
                wanted = {short_name(t): t for t in record.consumed}
                if set(env.action_names()) != set(wanted):
                    reasons.append(f"{out}: action set {sorted(env.action_names())} != toolkit {sorted(wanted)}")
                    continue
                for decl in env.actions:
                    tool_schema = rt.tools.info(wanted[decl.name]).representations.argument_schema
                    expect(f"{out}.{decl.name}", decl.representations(out).argument_schema, tool_schema)
        elif kind is TransformKind.T2A:
            for out, cfg in outputs.items():
                expect(out, cfg.representations.argument_schema, TASK_ARGS_SCHEMA)
        elif kind is TransformKind.A2E:
            want = rt.agents.info(record.input).representations.argument_schema
            for out, cfg in outputs.items():
                env = EnvironmentConfig.of(cfg)
                if env.action_names() != ["interact"]:
                    reasons.append(f"{out}: expected the single action 'interact'")
                    continue
                expect(f"{out}.interact", env.actions[0].representations(out).argument_schema, want)
        elif kind is TransformKind.E2A:
            for out, cfg in outputs.items():
                expect(out, cfg.representations.argument_schema, argument_schema((), True))
        return reasons

    def check_composition(self, first: TransformRecord, second: TransformRecord) -> ValidationResult:
        """Accept ``second ∘ first`` iff both are well typed and first's outputs feed second."""
        reasons = []
        for label, rec in (("first", first), ("second", second)):
            res = self.check_well_typed(rec)
            reasons.extend(f"{label}: {r}" for r in res.reasons)
        if reasons:
            return ValidationResult(False, tuple(reasons))
        k1, k2 = TransformKind(first.kind), TransformKind(second.kind)
        if k1.target is not k2.source:
            reasons.append(f"{k1.value} yields {k1.target.value} but {k2.value} consumes {k2.source.value}")
        missing = [n for n in second.consumed if n not in first.outputs]
        if missing:
            reasons.append(f"inputs not produced by the first transform: {missing}")
        return ValidationResult(not reasons, tuple(reasons))

    # -- persistence --------------------------------------------------------------

    def dump(self) -> dict:
        return {"records": [r.to_dict() for r in self.records]}

    def restore_dump(self, data: dict) -> None:
        records = [TransformRecord.from_dict(r) for r in data.get("records", ())]
        with self._lock:
            self._records = records


__all__ = [
    "NotFound",
    "Toolkit",
    "TransformKind",
    "TransformManager",
    "TransformRecord",
    "install_transform_behaviors",
]
