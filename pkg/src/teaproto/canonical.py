"""Canonical text encoding for structured values.

UTF-8, mapping keys sorted, no insignificant whitespace, one trailing newline.
Floats use Python's shortest round-trip repr, so persistence is bit exact.
"""
from __future__ import annotations

import json
import math
from typing import Any

from .errors import ProtocolError, ValidationFailed

MAX_DEPTH = 64


def check_structured(value: Any, _depth: int = 0) -> None:
    """Raise ValidationFailed unless ``value`` is a StructuredValue."""
    if _depth > MAX_DEPTH:
        raise ValidationFailed("structured value nested too deeply")
    if value is None or isinstance(value, (bool, int, str)):
        return
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValidationFailed("non-finite float is not representable")
        return
    if isinstance(value, list):
        for item in value:
            check_structured(item, _depth + 1)
        return
    if isinstance(value, dict):
        for key, item in value.items():
            if not isinstance(key, str):
                raise ValidationFailed(f"mapping key {key!r} is not text")
            check_structured(item, _depth + 1)
        return
    raise ValidationFailed(f"{type(value).__name__} is not a structured value")


def is_structured(value: Any) -> bool:
    try:
        check_structured(value)
    except ValidationFailed:
        return False
    return True


def dumps(value: Any) -> str:
    """Encode without the trailing newline (used for fingerprints and CLI args)."""
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def encode(value: Any) -> str:
    return dumps(value) + "\n"


def encode_bytes(value: Any) -> bytes:
    return encode(value).encode("utf-8")


def decode(text: str | bytes) -> Any:
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ProtocolError("payload is not UTF-8") from exc
    try:
        return json.loads(text, parse_constant=_reject_constant)
    except (json.JSONDecodeError, ValueError) as exc:
        raise ProtocolError(f"malformed canonical text: {exc}") from exc


def _reject_constant(name: str):
    raise ValueError(f"{name} is not allowed")
