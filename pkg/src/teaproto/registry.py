"""Registry machinery shared by every component kind.

A registry keeps the active mapping name -> config plus the live instance
built from it; the version manager keeps the history. All mutations run under
the runtime's mutation lock so the active map, history and retrieval index
change together.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Any, Callable

from .errors import LifecycleViolation, NameConflict, NotFound, PersistenceError, ProtocolError
from .persistence import read_manifest, write_manifest
from .schema import summarize
from .types import (
    INITIAL_VERSION,
    ComponentConfig,
    ComponentKind,
    ContractDocument,
    ContractEntry,
    Version,
    check_name,
)
from .versioning import BumpLevel, LifecycleState, VersionRecord, bump

if TYPE_CHECKING:
    from .runtime import Runtime


@dataclass
class Entry:
    config: ComponentConfig
    instance: Any = None
    dormant: bool = False
    lock: threading.RLock = field(default_factory=threading.RLock)


class ComponentRegistry:
    kind: ComponentKind
    manifest_name: str

    def __init__(self, runtime: Runtime):
        self.runtime = runtime
        self.versions = runtime.versions
        self._active: dict[str, Entry] = {}

    # -- hooks for subclasses -------------------------------------------------

    def instantiate(self, config: ComponentConfig) -> Any:
        """Build the live instance; return None if the behavior is unknown (dormant)."""
        return None

    def needs_instance(self, config: ComponentConfig) -> bool:
        return False

    def index_text(self, config: ComponentConfig) -> str:
        return config.descriptor.description

    def contract_text(self, config: ComponentConfig) -> str:
        return config.representations.text_description

    def on_unregister(self, name: str) -> None:
        pass

    # -- read side -----------------------------------------------------------

    @property
    def lock(self) -> threading.RLock:
        return self.runtime.lock

    def entry(self, name: str) -> Entry:
        with self.lock:
            try:
                return self._active[name]
            except KeyError:
                raise NotFound(f"{self.kind.value} {name!r} is not registered") from None

    def __contains__(self, name: str) -> bool:
        with self.lock:
            return name in self._active

    def __len__(self) -> int:
        with self.lock:
            return len(self._active)

    def info(self, name: str) -> ComponentConfig:
        return self.entry(name).config

    def live(self, name: str) -> Entry:
        """The active entry, refusing dormant ones."""
        entry = self.entry(name)
        if entry.dormant:
            raise LifecycleViolation(f"{self.kind.value} {name!r} is dormant: behavior {entry.config.behavior_id!r} unavailable")
        return entry

    def get(self, name: str) -> Any:
        return self.live(name).instance

    def list(self) -> list[str]:
        with self.lock:
            return sorted(self._active)

    def history(self, name: str) -> list[VersionRecord]:
        return self.versions.history(name, self.kind)

    def lookup(self, name: str, version: Version | str) -> ComponentConfig:
        return self.versions.lookup(name, self.kind, version)

    def retrieve(self, query: str, k: int = 5) -> list[tuple[str, float]]:
        return self.runtime.index.retrieve(self.kind, query, k)

    def contract(self) -> ContractDocument:
        with self.lock:
            entries = tuple(
                ContractEntry(
                    name=name,
                    version=str(e.config.version),
                    text_description=self.contract_text(e.config),
                    schema_summary=summarize(e.config.representations.argument_schema),
                )
                for name, e in sorted(self._active.items())
            )
        return ContractDocument(self.kind, entries, self.runtime.clock.now())

    # -- mutation primitives -------------------------------------------------

    def _activate(self, config: ComponentConfig, *, record: bool) -> ComponentConfig:
        """Record ``config`` (optionally), build its instance, point the active map and index at it."""
        instance = self.instantiate(config)
        dormant = instance is None and self.needs_instance(config)
        if dormant:
            config = replace(config, dormant=True)
        if record:
            self.versions.record(config)
        self._active[config.name] = Entry(config, instance, dormant)
        self.runtime.index.upsert(self.kind, config.name, self.index_text(config))
        return config

    def register_config(self, config: ComponentConfig) -> ComponentConfig:
        if config.kind is not self.kind:
            raise ProtocolError(f"{config.kind.value} config given to {self.kind.value} registry")
        check_name(config.name)
        with self.lock:
            if config.name in self._active or self.versions.history(config.name, self.kind):
                raise NameConflict(f"{self.kind.value} {config.name!r} already exists")
            return self._activate(config, record=True)

    def commit(
        self,
        name: str,
        change: Callable[[ComponentConfig], ComponentConfig],
        level: BumpLevel | str = BumpLevel.PATCH,
    ) -> ComponentConfig:
        """Derive a new version from the active config and make it active."""
        with self.lock:
            current = self.entry(name).config
            new_version = bump(self.versions.newest(name, self.kind), level)
            updated = change(current)
            updated = replace(updated, version=new_version, descriptor=updated.descriptor.with_name(name), dormant=False)
            return self._activate(updated, record=True)

    def copy(self, name: str, new_name: str) -> ComponentConfig:
        check_name(new_name)
        with self.lock:
            source = self.entry(name).config
            cfg = replace(
                source,
                descriptor=source.descriptor.with_name(new_name),
                version=INITIAL_VERSION,
                representations=self.rename_representations(source, new_name),
                dormant=False,
            )
            return self.register_config(cfg)

    def rename_representations(self, config: ComponentConfig, new_name: str):
        reps = config.representations
        call = dict(reps.call_schema)
        if "name" in call:
            call["name"] = new_name
        text = reps.text_description
        prefix = f"{config.name}:"
        if text.startswith(prefix):
            text = f"{new_name}:" + text[len(prefix):]
        return replace(reps, call_schema=call, text_description=text)

    def unregister(self, name: str) -> None:
        with self.lock:
            self.entry(name)
            del self._active[name]
            self.versions.remove(name, self.kind)
            self.runtime.index.remove(self.kind, name)
            self.on_unregister(name)

    def restore(self, name: str, version: Version | str) -> ComponentConfig:
        with self.lock:
            self.entry(name)
            old = self.versions.lookup(name, self.kind, version)
            return self.commit(name, lambda _current: old, BumpLevel.PATCH)

    def set_lifecycle(self, name: str, version: Version | str, state: LifecycleState | str) -> VersionRecord:
        """Change a version's state, then re-point the active entry at the latest resolvable version."""
        with self.lock:
            rec = self.versions.set_lifecycle(name, self.kind, version, state)
            try:
                latest = self.versions.latest(name, self.kind)
            except NotFound:
                if name in self._active:
                    del self._active[name]
                    self.runtime.index.remove(self.kind, name)
                return rec
            current = self._active.get(name)
            if current is None or current.config.version != latest.version:
                self._activate(latest.config_ref, record=False)
            return rec

    # -- persistence ---------------------------------------------------------

    def dump(self) -> dict:
        with self.lock:
            return {
                "kind": self.kind.value,
                "active": {name: str(e.config.version) for name, e in sorted(self._active.items())},
                "history": [rec.to_dict() for rec in self.versions.records(self.kind)],
            }

    def restore_dump(self, data: dict) -> None:
        try:
            if data.get("kind") != self.kind.value:
                raise PersistenceError(f"manifest kind {data.get('kind')!r} does not match {self.kind.value}")
            records = [VersionRecord.from_dict(r) for r in data["history"]]
            active = dict(data["active"])
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise PersistenceError(f"malformed {self.kind.value} manifest: {exc}") from exc
        by_key = {(r.name, str(r.version)): r for r in records}
        with self.lock:
            for name in list(self._active):
                self.runtime.index.remove(self.kind, name)
            self._active.clear()
            self.versions.replace_kind(self.kind, records)
            for name, version in sorted(active.items()):
                rec = by_key.get((name, version))
                if rec is None:
                    raise PersistenceError(f"active {name} {version} missing from history")
                self._activate(rec.config_ref, record=False)

    def save(self, path) -> None:
        write_manifest(path, self.dump())

    def load(self, path) -> None:
        self.restore_dump(read_manifest(path))
