"""Typed parameter declarations and the three representations derived from them."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Sequence

from .errors import ValidationFailed
from .types import Descriptor, Representations, check_segment

SEMANTIC_TYPES = ("integer", "float", "text", "boolean", "sequence", "mapping")

_JSON_TYPE = {
    "integer": "integer",
    "float": "number",
    "text": "string",
    "boolean": "boolean",
    "sequence": "array",
    "mapping": "object",
}


@dataclass(frozen=True)
class ParamSpec:
    name: str
    type: str
    required: bool = True
    doc: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "type": self.type, "required": self.required, "doc": self.doc}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ParamSpec:
        try:
            return cls(data["name"], data["type"], bool(data.get("required", True)), data.get("doc", ""))
        except (KeyError, TypeError) as exc:
            raise ValidationFailed(f"malformed parameter declaration: {exc}") from None


def coerce_params(params: Iterable[ParamSpec | Mapping[str, Any] | Sequence[Any]]) -> tuple[ParamSpec, ...]:
    """Accept ParamSpec objects, dicts, or (name, type[, required[, doc]]) tuples."""
    out = []
    for p in params:
        if isinstance(p, ParamSpec):
            out.append(p)
        elif isinstance(p, Mapping):
            out.append(ParamSpec.from_dict(p))
        else:
            out.append(ParamSpec(*p))
    return tuple(out)


def check_params(params: Sequence[ParamSpec]) -> None:
    reasons = []
    seen = set()
    for p in params:
        try:
            check_segment(p.name, "parameter name")
        except ValidationFailed as exc:
            reasons.extend(exc.reasons)
        if p.type not in SEMANTIC_TYPES:
            reasons.append(f"parameter {p.name!r} has unknown type {p.type!r}")
        if p.name in seen:
            reasons.append(f"duplicate parameter {p.name!r}")
        seen.add(p.name)
    if reasons:
        raise ValidationFailed("invalid parameter list", reasons)


def argument_schema(params: Sequence[ParamSpec], open_args: bool = False) -> dict:
    return {"params": [p.to_dict() for p in params], "additional": open_args}


def params_of(schema: Mapping[str, Any]) -> tuple[ParamSpec, ...]:
    return tuple(ParamSpec.from_dict(p) for p in schema.get("params", ()))


def signature(schema: Mapping[str, Any]) -> tuple:
    """The typed shape of an argument schema with docs stripped."""
    params = sorted((p["name"], p["type"], bool(p.get("required", True))) for p in schema.get("params", ()))
    return tuple(params), bool(schema.get("additional", False))


def synthesize_representations(
    descriptor: Descriptor,
    params: Sequence[ParamSpec],
    open_args: bool = False,
) -> Representations:
    check_params(params)
    properties = {}
    for p in params:
        prop = {"type": _JSON_TYPE[p.type]}
        if p.doc:
            prop["description"] = p.doc
        properties[p.name] = prop
    call_schema = {
        "name": descriptor.name,
        "description": descriptor.description,
        "parameters": {
            "type": "object",
            "properties": properties,
            "required": [p.name for p in params if p.required],
            "additionalProperties": open_args,
        },
    }
    lines = [f"{descriptor.name}: {descriptor.description}"]
    if params:
        lines.append("Parameters:")
        for p in params:
            flag = "required" if p.required else "optional"
            lines.append(f"- {p.name} ({p.type}, {flag})" + (f": {p.doc}" if p.doc else ""))
    else:
        lines.append("Parameters: none")
    if open_args:
        lines.append("Accepts additional named arguments.")
    return Representations(call_schema, "\n".join(lines), argument_schema(params, open_args))


def summarize(schema: Mapping[str, Any]) -> str:
    parts = []
    for p in schema.get("params", ()):
        parts.append(f"{p['name']}:{p['type']}" + ("" if p.get("required", True) else "?"))
    if schema.get("additional"):
        parts.append("**")
    return "(" + ", ".join(parts) + ")"


def _type_ok(kind: str, value: Any) -> bool:
    if kind == "integer":
        return isinstance(value, int) and not isinstance(value, bool)
    if kind == "float":
        return isinstance(value, float)
    if kind == "text":
        return isinstance(value, str)
    if kind == "boolean":
        return isinstance(value, bool)
    if kind == "sequence":
        return isinstance(value, list)
    if kind == "mapping":
        return isinstance(value, dict)
    return False


def check_args(schema: Mapping[str, Any], args: Any) -> None:
    """Strict check: no coercion, every offending parameter listed."""
    if not isinstance(args, dict):
        raise ValidationFailed("arguments must be a mapping", [f"got {type(args).__name__}"])
    reasons = []
    declared = {}
    for raw in schema.get("params", ()):
        p = ParamSpec.from_dict(raw)
        declared[p.name] = p
        if p.name not in args:
            if p.required:
                reasons.append(f"missing {p.name}")
        elif not _type_ok(p.type, args[p.name]):
            reasons.append(f"{p.name} expected {p.type}, got {type(args[p.name]).__name__}")
    if not schema.get("additional", False):
        for key in sorted(args):
            if key not in declared:
                reasons.append(f"unexpected {key}")
    if reasons:
        raise ValidationFailed("argument validation failed", reasons)
