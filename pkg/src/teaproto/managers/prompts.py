"""Prompt registry: versioned templates with module slots and render-time variables."""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any, Mapping

from .. import canonical
from ..errors import ValidationFailed
from ..registry import ComponentRegistry
from ..schema import ParamSpec, synthesize_representations
from ..types import INITIAL_VERSION, ComponentConfig, ComponentKind, Descriptor, Version, validate_descriptor
from ..versioning import BumpLevel

PLACEHOLDER_RE = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")
PROMPT_FIELDS = ("system_template", "message_template", "modules", "trainable_slots")


def placeholders(text: str) -> list[str]:
    seen = []
    for m in PLACEHOLDER_RE.finditer(text):
        if m[1] not in seen:
            seen.append(m[1])
    return seen


@dataclass(frozen=True)
class PromptConfig:
    name: str
    version: Version
    system_template: str = ""
    message_template: str = ""
    modules: Mapping[str, str] = field(default_factory=dict)
    trainable_slots: tuple[str, ...] = ()

    @classmethod
    def of(cls, config: ComponentConfig) -> PromptConfig:
        x = config.extra
        return cls(
            config.name,
            config.version,
            x.get("system_template", ""),
            x.get("message_template", ""),
            dict(x.get("modules", {})),
            tuple(x.get("trainable_slots", ())),
        )

    def variables(self) -> list[str]:
        """Placeholders that must be supplied at render time."""
        names = placeholders(self.system_template) + placeholders(self.message_template)
        for text in self.modules.values():
            names += placeholders(text)
        out = []
        for n in names:
            if n not in self.modules and n not in out:
                out.append(n)
        return out


@dataclass(frozen=True)
class PromptSpec:
    descriptor: Descriptor
    system_template: str = ""
    message_template: str = ""
    modules: Mapping[str, str] = field(default_factory=dict)
    trainable_slots: tuple[str, ...] = ()


def _bundle(spec: PromptSpec) -> dict:
    return {
        "system_template": spec.system_template,
        "message_template": spec.message_template,
        "modules": dict(spec.modules),
        "trainable_slots": sorted(spec.trainable_slots),
    }


def render_template(template: str, modules: Mapping[str, str], variables: Mapping[str, Any]) -> str:
    """Single-pass substitution; module text may itself reference variables."""
    missing = []

    def value(slot: str) -> str | None:
        if slot in variables:
            return str(variables[slot])
        if slot in modules:
            return PLACEHOLDER_RE.sub(lambda m: var_only(m[1], m[0]), modules[slot])
        return None

    def var_only(slot: str, raw: str) -> str:
        if slot in variables:
            return str(variables[slot])
        if slot not in missing:
            missing.append(slot)
        return raw

    def sub(m: re.Match) -> str:
        v = value(m[1])
        if v is None:
            if m[1] not in missing:
                missing.append(m[1])
            return m[0]
        return v

    text = PLACEHOLDER_RE.sub(sub, template)
    if missing:
        raise ValidationFailed("missing prompt variables", missing)
    return text


class PromptRegistry(ComponentRegistry):
    kind = ComponentKind.PROMPT
    manifest_name = "prompts.manifest"

    def build_config(self, spec: PromptSpec, version: Version = INITIAL_VERSION) -> ComponentConfig:
        validate_descriptor(spec.descriptor).raise_for_failure(f"invalid prompt descriptor {spec.descriptor.name!r}")
        unknown = [s for s in spec.trainable_slots if s not in spec.modules]
        if unknown:
            raise ValidationFailed("trainable slots must name modules", [f"unknown slot {s!r}" for s in unknown])
        bundle = _bundle(spec)
        variables = PromptConfig(spec.descriptor.name, version, **{**bundle, "trainable_slots": tuple(bundle["trainable_slots"])}).variables()
        params = [ParamSpec(v, "text", True, "render-time variable") for v in variables]
        return ComponentConfig(
            kind=self.kind,
            descriptor=spec.descriptor,
            version=version,
            source=canonical.dumps(bundle),
            representations=synthesize_representations(spec.descriptor, params),
            extra=bundle,
        )

    def register(self, spec: PromptSpec) -> ComponentConfig:
        with self.lock:
            return self.register_config(self.build_config(spec))

    def prompt(self, name: str, version: Version | str | None = None) -> PromptConfig:
        cfg = self.info(name) if version is None else self.lookup(name, version)
        return PromptConfig.of(cfg)

    def render(self, name: str, variables: Mapping[str, Any] | None = None, version=None, part: str = "message") -> str:
        p = self.prompt(name, version)
        template = {"message": p.message_template, "system": p.system_template}.get(part)
        if template is None:
            raise ValidationFailed(f"unknown prompt part {part!r}")
        return render_template(template, p.modules, variables or {})

    def spec_of(self, config: ComponentConfig) -> PromptSpec:
        p = PromptConfig.of(config)
        return PromptSpec(config.descriptor, p.system_template, p.message_template, dict(p.modules), p.trainable_slots)

    def update(self, name: str, changes: Mapping[str, Any], level: BumpLevel | str = BumpLevel.PATCH) -> ComponentConfig:
        """Apply field changes (templates, modules, trainable_slots, description) as a new version."""
        allowed = set(PROMPT_FIELDS) | {"description"}
        bad = sorted(set(changes) - allowed)
        if bad:
            raise ValidationFailed("unknown prompt fields", bad)
        with self.lock:
            spec = self.spec_of(self.info(name))
            fields = {
                "descriptor": spec.descriptor,
                "system_template": spec.system_template,
                "message_template": spec.message_template,
                "modules": dict(spec.modules),
                "trainable_slots": spec.trainable_slots,
            }
            for key, value in changes.items():
                if key == "description":
                    fields["descriptor"] = Descriptor(name, value, spec.descriptor.metadata, spec.descriptor.evolvable)
                elif key == "modules":
                    fields["modules"] = {**fields["modules"], **value}
                elif key == "trainable_slots":
                    fields["trainable_slots"] = tuple(value)
                else:
                    fields[key] = value
            cfg = self.build_config(PromptSpec(**fields))
            return self.commit(name, lambda _current: cfg, level)
