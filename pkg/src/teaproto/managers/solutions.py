"""Registry for memory components: free-form text payloads such as stored solutions."""
from __future__ import annotations

from ..registry import ComponentRegistry
from ..schema import synthesize_representations
from ..types import INITIAL_VERSION, ComponentConfig, ComponentKind, Descriptor, validate_descriptor


class MemoryComponentRegistry(ComponentRegistry):
    kind = ComponentKind.MEMORY
    manifest_name = "memory.manifest"

    def build_config(self, descriptor: Descriptor, content: str) -> ComponentConfig:
        validate_descriptor(descriptor).raise_for_failure(f"invalid memory descriptor {descriptor.name!r}")
        return ComponentConfig(
            kind=self.kind,
            descriptor=descriptor,
            version=INITIAL_VERSION,
            source=content,
            representations=synthesize_representations(descriptor, ()),
        )

    def register(self, descriptor: Descriptor, content: str) -> ComponentConfig:
        with self.lock:
            return self.register_config(self.build_config(descriptor, content))

    def content(self, name: str) -> str:
        return self.info(name).source
