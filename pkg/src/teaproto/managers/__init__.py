from .codec import decode as codec_decode
from .codec import encode as codec_encode
from .memory import MemoryEvent, MemoryManager, SessionHandle, SessionRegistry
from .model import FunctionBackend, ModelManager, ScriptedBackend, fingerprint
from .prompts import PromptConfig, PromptRegistry, PromptSpec, render_template
from .solutions import MemoryComponentRegistry
from .tracer import TraceRecord, Tracer, load_trace_file

__all__ = [
    "FunctionBackend",
    "MemoryComponentRegistry",
    "MemoryEvent",
    "MemoryManager",
    "ModelManager",
    "PromptConfig",
    "PromptRegistry",
    "PromptSpec",
    "ScriptedBackend",
    "SessionHandle",
    "SessionRegistry",
    "TraceRecord",
    "Tracer",
    "codec_decode",
    "codec_encode",
    "fingerprint",
    "load_trace_file",
    "render_template",
]
