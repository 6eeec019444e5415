"""Text envelopes for component configs (the dynamic manager's serialization half)."""
from __future__ import annotations

from dataclasses import replace
from typing import Callable

from .. import canonical
from ..errors import ProtocolError, ValidationFailed
from ..types import ComponentConfig, ComponentKind

ENVELOPE_FORMAT = "tea-component/1"
Resolver = Callable[[ComponentKind, str], bool]

_BEHAVIOR_TABLE = {
    ComponentKind.TOOL: "tool",
    ComponentKind.ENVIRONMENT: "environment",
    ComponentKind.AGENT: "agent",
}


def behavior_resolver(behaviors) -> Resolver:
    """Adapt a BehaviorRegistry into a codec resolver."""

    def resolve(kind: ComponentKind, behavior_id: str) -> bool:
        table = _BEHAVIOR_TABLE.get(kind)
        return table is None or behaviors.resolve(table, behavior_id) is not None

    return resolve


def envelope(config: ComponentConfig) -> dict:
    body = config.to_dict()
    body["format"] = ENVELOPE_FORMAT
    body["schema_dump"] = body["representations"]["argument_schema"]
    return body


def encode(config: ComponentConfig) -> str:
    return canonical.encode(envelope(config))


def decode(text: str | bytes, resolver: Resolver | None = None) -> ComponentConfig:
    data = canonical.decode(text)
    if not isinstance(data, dict) or data.get("format") != ENVELOPE_FORMAT:
        raise ProtocolError("not a component envelope")
    try:
        config = ComponentConfig.from_dict(data)
    except (KeyError, TypeError, AttributeError) as exc:
        raise ProtocolError(f"malformed component envelope: missing {exc}") from None
    except ValueError as exc:
        raise ValidationFailed(f"invalid component envelope: {exc}") from None
    if data.get("schema_dump") != data["representations"].get("argument_schema"):
        raise ValidationFailed("schema_dump disagrees with argument_schema")
    if config.kind in _BEHAVIOR_TABLE:
        bid = config.behavior_id
        if bid is None or (resolver is not None and not resolver(config.kind, bid)):
            config = replace(config, dormant=True)
    return config
