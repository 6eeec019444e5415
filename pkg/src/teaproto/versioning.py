"""Version histories, lifecycle states and rollback lookup for every component kind."""
from __future__ import annotations

import bisect
import enum
import threading
from dataclasses import dataclass, replace
from typing import Any, Iterable, Mapping

from .errors import LifecycleViolation, NameConflict, NotFound, VersionNotFound
from .types import ComponentConfig, ComponentKind, Version
from .util import Clock, SystemClock


class BumpLevel(str, enum.Enum):
    MAJOR = "major"
    MINOR = "minor"
    PATCH = "patch"


class LifecycleState(str, enum.Enum):
    ACTIVE = "active"
    DEPRECATED = "deprecated"
    ARCHIVED = "archived"


LEGAL_TRANSITIONS = {
    (LifecycleState.ACTIVE, LifecycleState.DEPRECATED),
    (LifecycleState.DEPRECATED, LifecycleState.ARCHIVED),
    (LifecycleState.ACTIVE, LifecycleState.ARCHIVED),
}


def bump(v: Version | str, level: BumpLevel | str) -> Version:
    v = Version.parse(v)
    level = BumpLevel(level)
    if level is BumpLevel.MAJOR:
        return Version(v.major + 1, 0, 0)
    if level is BumpLevel.MINOR:
        return Version(v.major, v.minor + 1, 0)
    return Version(v.major, v.minor, v.patch + 1)


@dataclass(frozen=True)
class VersionRecord:
    name: str
    kind: ComponentKind
    version: Version
    state: LifecycleState
    description: str
    created_at: float
    config_ref: ComponentConfig

    @property
    def deprecated(self) -> bool:
        return self.state is LifecycleState.DEPRECATED

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind.value,
            "version": str(self.version),
            "state": self.state.value,
            "description": self.description,
            "created_at": self.created_at,
            "config": self.config_ref.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> VersionRecord:
        config = ComponentConfig.from_dict(data["config"])
        return cls(
            name=data["name"],
            kind=ComponentKind(data["kind"]),
            version=Version.parse(data["version"]),
            state=LifecycleState(data["state"]),
            description=data.get("description", ""),
            created_at=float(data["created_at"]),
            config_ref=config,
        )


class VersionManager:
    """Shared history store. Every public method is atomic under one lock."""

    def __init__(self, clock: Clock | None = None):
        self.clock = clock or SystemClock()
        self._lock = threading.RLock()
        # (kind, name) -> records sorted by version
        self._histories: dict[tuple[ComponentKind, str], list[VersionRecord]] = {}

    def record(self, cfg: ComponentConfig, description: str = "") -> VersionRecord:
        key = (cfg.kind, cfg.name)
        with self._lock:
            history = self._histories.setdefault(key, [])
            versions = [r.version for r in history]
            i = bisect.bisect_left(versions, cfg.version)
            if i < len(versions) and versions[i] == cfg.version:
                if not history:
                    del self._histories[key]
                raise NameConflict(f"{cfg.kind.value} {cfg.name!r} already has version {cfg.version}")
            created = self.clock.now()
            if history:
                created = max(created, max(r.created_at for r in history))
            rec = VersionRecord(
                name=cfg.name,
                kind=cfg.kind,
                version=cfg.version,
                state=LifecycleState.ACTIVE,
                description=description or cfg.descriptor.description,
                created_at=created,
                config_ref=cfg,
            )
            history.insert(i, rec)
            return rec

    def history(self, name: str, kind: ComponentKind | str) -> list[VersionRecord]:
        with self._lock:
            return list(self._histories.get((ComponentKind.parse(kind), name), ()))

    def names(self, kind: ComponentKind | str) -> list[str]:
        kind = ComponentKind.parse(kind)
        with self._lock:
            return sorted(n for (k, n) in self._histories if k is kind)

    def latest(self, name: str, kind: ComponentKind | str) -> VersionRecord:
        kind = ComponentKind.parse(kind)
        with self._lock:
            for rec in reversed(self._histories.get((kind, name), ())):
                if rec.state is not LifecycleState.ARCHIVED:
                    return rec
        raise NotFound(f"no resolvable version of {kind.value} {name!r}")

    def newest(self, name: str, kind: ComponentKind | str) -> Version:
        """Highest recorded version regardless of state; base for the next bump."""
        kind = ComponentKind.parse(kind)
        with self._lock:
            history = self._histories.get((kind, name))
            if not history:
                raise NotFound(f"no history for {kind.value} {name!r}")
            return history[-1].version

    def _find(self, name: str, kind: ComponentKind, version: Version) -> tuple[list[VersionRecord], int]:
        history = self._histories.get((kind, name), [])
        versions = [r.version for r in history]
        i = bisect.bisect_left(versions, version)
        if i >= len(versions) or versions[i] != version:
            raise VersionNotFound(f"{kind.value} {name!r} has no version {version}")
        return history, i

    def get_record(self, name: str, kind: ComponentKind | str, version: Version | str) -> VersionRecord:
        with self._lock:
            history, i = self._find(name, ComponentKind.parse(kind), Version.parse(version))
            return history[i]

    def lookup(self, name: str, kind: ComponentKind | str, version: Version | str) -> ComponentConfig:
        return self.get_record(name, kind, version).config_ref

    def set_lifecycle(
        self, name: str, kind: ComponentKind | str, version: Version | str, new_state: LifecycleState | str
    ) -> VersionRecord:
        new_state = LifecycleState(new_state)
        with self._lock:
            history, i = self._find(name, ComponentKind.parse(kind), Version.parse(version))
            current = history[i]
            if current.state is new_state:
                return current
            if (current.state, new_state) not in LEGAL_TRANSITIONS:
                raise LifecycleViolation(
                    f"illegal transition {current.state.value} -> {new_state.value} for {name!r} {version}"
                )
            history[i] = replace(current, state=new_state)
            return history[i]

    def remove(self, name: str, kind: ComponentKind | str) -> int:
        with self._lock:
            return len(self._histories.pop((ComponentKind.parse(kind), name), ()))

    def records(self, kind: ComponentKind | str) -> list[VersionRecord]:
        kind = ComponentKind.parse(kind)
        with self._lock:
            out = []
            for (k, n) in sorted(self._histories, key=lambda key: key[1]):
                if k is kind:
                    out.extend(self._histories[(k, n)])
            return out

    def replace_kind(self, kind: ComponentKind | str, records: Iterable[VersionRecord]) -> None:
        """Swap in a whole kind's history verbatim (used by manifest load)."""
        kind = ComponentKind.parse(kind)
        fresh: dict[tuple[ComponentKind, str], list[VersionRecord]] = {}
        for rec in records:
            if rec.kind is not kind:
                raise ValueError(f"record of kind {rec.kind.value} in {kind.value} history")
            fresh.setdefault((kind, rec.name), []).append(rec)
        for key, history in fresh.items():
            history.sort(key=lambda r: r.version)
            if len({r.version for r in history}) != len(history):
                raise NameConflict(f"duplicate versions in history of {key[1]!r}")
        with self._lock:
            for key in [k for k in self._histories if k[0] is kind]:
                del self._histories[key]
            self._histories.update(fresh)
