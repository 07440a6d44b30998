"""Adapter processes that serve the comicvoice perception and TTS protocol.

Two profiles: "echo" answers every op with fixed, structurally valid
responses (conformance testing without any model), and "models" serves
channels backed by trained artifacts.  comic_adapters.identity holds the
trainable classifier and is imported lazily because torch is heavy.
"""

# comic_adapters.serve is the `python -m` entry point and is not imported
# here: importing it from the package __init__ would re-run it under runpy.
from .config import AdapterConfig, AdapterConfigError, load_adapter_config
from .handlers import echo_handlers
from .protocol import (
    ADAPTER_OPS,
    PROTOCOL_VERSION,
    AdapterRequest,
    build_manifest,
    handle_line,
)

__all__ = [
    "ADAPTER_OPS",
    "PROTOCOL_VERSION",
    "AdapterConfig",
    "AdapterConfigError",
    "AdapterRequest",
    "build_manifest",
    "echo_handlers",
    "handle_line",
    "load_adapter_config",
]
