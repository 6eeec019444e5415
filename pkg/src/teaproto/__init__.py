"""Versioned registries, typed transformations and a wire server for tools, environments and agents."""
from .errors import ErrorKind, TEAError
from .runtime import Runtime

__version__ = "0.1.0"

__all__ = ["ErrorKind", "Runtime", "TEAError", "__version__"]
