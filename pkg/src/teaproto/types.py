"""Core vocabulary: names, versions, descriptors, configs and contract documents."""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Any, Mapping

from .errors import ValidationFailed

NAME_RE = re.compile(r"[a-z][a-z0-9_.\-]*")
# Action and parameter names are one name segment; this keeps the
# ``env.<env>.<action>`` naming map injective.
SEGMENT_RE = re.compile(r"[a-z][a-z0-9_\-]*")
_VERSION_RE = re.compile(r"(0|[1-9][0-9]*)\.(0|[1-9][0-9]*)\.(0|[1-9][0-9]*)")


class ComponentKind(str, enum.Enum):
    TOOL = "tool"
    ENVIRONMENT = "environment"
    AGENT = "agent"
    PROMPT = "prompt"
    MEMORY = "memory"

    @classmethod
    def parse(cls, text: str | ComponentKind) -> ComponentKind:
        if isinstance(text, ComponentKind):
            return text
        aliases = {"env": "environment", "tools": "tool", "agents": "agent", "environments": "environment"}
        try:
            return cls(aliases.get(text, text))
        except ValueError:
            raise ValidationFailed(f"unknown component kind {text!r}") from None


def name_problems(name: Any) -> list[str]:
    """Every naming rule ``name`` breaks; empty list when valid."""
    if not isinstance(name, str):
        return ["name is not text"]
    if not name:
        return ["empty name"]
    problems = []
    if any(ch.isspace() for ch in name):
        problems.append("name contains whitespace")
    if not name[0].isalpha():
        problems.append("name must start with a letter")
    bad = sorted({ch for ch in name if not ch.isspace() and not re.fullmatch(r"[a-z0-9_.\-]", ch)})
    if bad:
        problems.append(f"name has invalid characters {''.join(bad)!r}")
    return problems


def check_name(name: Any, what: str = "name") -> str:
    problems = name_problems(name)
    if problems:
        raise ValidationFailed(f"invalid {what} {name!r}", problems)
    return name


def check_segment(name: Any, what: str) -> str:
    if not isinstance(name, str) or not SEGMENT_RE.fullmatch(name):
        raise ValidationFailed(f"invalid {what} {name!r}", [f"{what} must match {SEGMENT_RE.pattern}"])
    return name


@dataclass(frozen=True, order=True)
class Version:
    major: int = 1
    minor: int = 0
    patch: int = 0

    def __post_init__(self):
        for part in (self.major, self.minor, self.patch):
            if not isinstance(part, int) or isinstance(part, bool) or part < 0:
                raise ValidationFailed(f"version fields must be non-negative integers, got {part!r}")

    @classmethod
    def parse(cls, text: str | Version) -> Version:
        if isinstance(text, Version):
            return text
        m = _VERSION_RE.fullmatch(text) if isinstance(text, str) else None
        if m is None:
            raise ValidationFailed(f"malformed version string {text!r}")
        return cls(int(m[1]), int(m[2]), int(m[3]))

    def __str__(self) -> str:
        return f"{self.major}.{self.minor}.{self.patch}"


INITIAL_VERSION = Version(1, 0, 0)


def _frozen_map(data: Mapping[str, Any] | None) -> Mapping[str, Any]:
    return MappingProxyType(dict(data or {}))


@dataclass(frozen=True)
class Descriptor:
    name: str
    description: str
    metadata: Mapping[str, str] = field(default_factory=dict)
    evolvable: bool = False

    def __post_init__(self):
        object.__setattr__(self, "metadata", _frozen_map(self.metadata))

    def with_name(self, name: str) -> Descriptor:
        return replace(self, name=name)

    def with_metadata(self, **extra: str) -> Descriptor:
        return replace(self, metadata={**self.metadata, **extra})

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "metadata": dict(self.metadata),
            "evolvable": self.evolvable,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> Descriptor:
        try:
            return cls(
                name=data["name"],
                description=data.get("description", ""),
                metadata=dict(data.get("metadata") or {}),
                evolvable=bool(data.get("evolvable", False)),
            )
        except (KeyError, TypeError, AttributeError) as exc:
            raise ValidationFailed(f"malformed descriptor: {exc}") from None


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    reasons: tuple[str, ...] = ()

    def __bool__(self) -> bool:
        return self.ok

    def raise_for_failure(self, detail: str = "validation failed") -> None:
        if not self.ok:
            raise ValidationFailed(detail, self.reasons)


def validate_descriptor(d: Descriptor) -> ValidationResult:
    reasons = name_problems(d.name)
    if not isinstance(d.description, str) or not d.description.strip():
        reasons.append("empty description")
    for key, value in d.metadata.items():
        if not isinstance(key, str) or not isinstance(value, str):
            reasons.append(f"metadata entry {key!r} is not text")
    if not isinstance(d.evolvable, bool):
        reasons.append("evolvable flag is not boolean")
    return ValidationResult(not reasons, tuple(reasons))


@dataclass(frozen=True)
class Representations:
    """The three derived views of one declaration."""

    call_schema: Mapping[str, Any]
    text_description: str
    argument_schema: Mapping[str, Any]

    def to_dict(self) -> dict:
        return {
            "call_schema": _thaw(self.call_schema),
            "text_description": self.text_description,
            "argument_schema": _thaw(self.argument_schema),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> Representations:
        return cls(data["call_schema"], data["text_description"], data["argument_schema"])


def _thaw(value: Any) -> Any:
    if isinstance(value, Mapping):
        return {k: _thaw(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_thaw(v) for v in value]
    return value


@dataclass(frozen=True)
class ComponentConfig:
    """One versioned configuration of a tool, environment, agent, prompt or memory.

    ``extra`` carries the kind-specific fields (environment actions and rules,
    prompt templates) so every kind shares one persistence path. ``dormant``
    marks configs whose behavior factory could not be resolved on load; it is
    not part of equality.
    """

    kind: ComponentKind
    descriptor: Descriptor
    version: Version
    source: str
    representations: Representations
    extra: Mapping[str, Any] = field(default_factory=dict)
    dormant: bool = field(default=False, compare=False)

    @property
    def name(self) -> str:
        return self.descriptor.name

    @property
    def behavior_id(self) -> str | None:
        return self.descriptor.metadata.get("behavior_id")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "descriptor": self.descriptor.to_dict(),
            "version": str(self.version),
            "source": self.source,
            "representations": self.representations.to_dict(),
            "extra": _thaw(self.extra),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ComponentConfig:
        return cls(
            kind=ComponentKind(data["kind"]),
            descriptor=Descriptor.from_dict(data["descriptor"]),
            version=Version.parse(data["version"]),
            source=data["source"],
            representations=Representations.from_dict(data["representations"]),
            extra=data.get("extra") or {},
        )


@dataclass(frozen=True)
class ContractEntry:
    name: str
    version: str
    text_description: str
    schema_summary: str

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "version": self.version,
            "text_description": self.text_description,
            "schema_summary": self.schema_summary,
        }


@dataclass(frozen=True)
class ContractDocument:
    kind: ComponentKind
    entries: tuple[ContractEntry, ...]
    generated_at: float

    def __len__(self) -> int:
        return len(self.entries)

    def render(self) -> str:
        lines = [f"# {self.kind.value} contract", f"generated_at: {self.generated_at!r}", f"count: {len(self.entries)}", ""]
        for e in self.entries:
            lines += [f"## {e.name} (v{e.version})", e.text_description, f"signature: {e.schema_summary}", ""]
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "generated_at": self.generated_at,
            "entries": [e.to_dict() for e in self.entries],
        }
