"""Tool Context Protocol: tool registry, representation synthesis and invocation."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Callable, Sequence

from . import canonical
from .errors import ErrorKind, TEAError, error_for
from .registry import ComponentRegistry
from .schema import ParamSpec, check_args, coerce_params, params_of, synthesize_representations
from .types import INITIAL_VERSION, ComponentConfig, ComponentKind, Descriptor, Version, validate_descriptor
from .versioning import BumpLevel


@dataclass(frozen=True)
class ToolSpec:
    """Declaration of a tool.

    ``behavior_id`` names a factory in the runtime's behavior table; when
    ``behavior`` is given as a plain callable it is registered under that id
    (defaulting to the tool name) before the config is built.
    """

    descriptor: Descriptor
    params: Sequence[ParamSpec] = ()
    behavior_id: str | None = None
    source: str = ""
    behavior: Callable[[dict], Any] | None = field(default=None, compare=False)
    open_args: bool = False

    def __post_init__(self):
        object.__setattr__(self, "params", coerce_params(self.params))

    @property
    def resolved_behavior_id(self) -> str | None:
        return self.behavior_id or self.descriptor.metadata.get("behavior_id") or (
            self.descriptor.name if self.behavior is not None else None
        )


@dataclass(frozen=True)
class ErrorInfo:
    kind: ErrorKind
    detail: str

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "detail": self.detail}


@dataclass(frozen=True)
class ToolResponse:
    ok: bool
    output: Any
    error: ErrorInfo | None
    elapsed: float
    tool_version: Version

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "output": self.output,
            "error": None if self.error is None else self.error.to_dict(),
            "elapsed": self.elapsed,
            "tool_version": str(self.tool_version),
        }


def synthesize(spec: ToolSpec):
    return synthesize_representations(spec.descriptor, spec.params, spec.open_args)


class ToolRegistry(ComponentRegistry):
    kind = ComponentKind.TOOL
    manifest_name = "tools.manifest"

    def build_config(self, spec: ToolSpec, version: Version = INITIAL_VERSION) -> ComponentConfig:
        validate_descriptor(spec.descriptor).raise_for_failure(f"invalid tool descriptor {spec.descriptor.name!r}")
        behavior_id = spec.resolved_behavior_id
        if spec.behavior is not None:
            self.runtime.behaviors.tool(behavior_id, spec.behavior)
        descriptor = spec.descriptor
        if behavior_id is not None:
            descriptor = descriptor.with_metadata(behavior_id=behavior_id)
        return ComponentConfig(
            kind=self.kind,
            descriptor=descriptor,
            version=version,
            source=spec.source,
            representations=synthesize(spec),
        )

    def instantiate(self, config: ComponentConfig):
        factory = self.runtime.behaviors.resolve("tool", config.behavior_id)
        return None if factory is None else factory(self.runtime, config)

    def needs_instance(self, config: ComponentConfig) -> bool:
        return True

    def register(self, spec: ToolSpec) -> ComponentConfig:
        with self.lock:
            return self.register_config(self.build_config(spec))

    def update(self, name: str, spec: ToolSpec, level: BumpLevel | str = BumpLevel.PATCH) -> ComponentConfig:
        with self.lock:
            self.entry(name)
            spec = replace(spec, descriptor=spec.descriptor.with_name(name))
            cfg = self.build_config(spec)
            return self.commit(name, lambda _current: cfg, level)

    def params(self, name: str) -> tuple[ParamSpec, ...]:
        return params_of(self.info(name).representations.argument_schema)

    def invoke(self, name: str, args: dict | None = None, session=None) -> ToolResponse:
        """Run a tool. Precondition failures raise; behavior failures come back in the response."""
        args = {} if args is None else args
        with self.runtime.tracing("tool", name, args, session) as trace:
            entry = self.live(name)
            instance, config = entry.instance, entry.config
            check_args(config.representations.argument_schema, args)
            canonical.check_structured(args)
            clock = self.runtime.clock
            start = clock.now()
            try:
                output = instance(dict(args))
                canonical.check_structured(output)
            except TEAError as exc:
                resp = ToolResponse(False, None, ErrorInfo(exc.kind, str(exc)), clock.now() - start, config.version)
            except Exception as exc:  # noqa: BLE001 - any behavior failure is a BackendFailure
                detail = f"{type(exc).__name__}: {exc}"
                resp = ToolResponse(False, None, ErrorInfo(ErrorKind.BACKEND_FAILURE, detail), clock.now() - start, config.version)
            else:
                resp = ToolResponse(True, output, None, clock.now() - start, config.version)
            trace.outcome = resp.to_dict()
            return resp

    def call(self, name: str, args: dict | None = None, session=None) -> Any:
        """Invoke and return the output, raising the response's error on failure."""
        resp = self.invoke(name, args, session)
        if not resp.ok:
            raise error_for(resp.error.kind, resp.error.detail)
        return resp.output

