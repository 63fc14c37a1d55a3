"""Offline model sidecar: runs encoders and captioners, exports files.

The retrieval pipeline consumes these exports through its file formats
only; nothing here is imported by it.
"""

from .errors import AdapterError
from .export import export_captions, export_embeddings
from .jobs import ExportJob
from .registry import get_model, model_string

__all__ = [
    "AdapterError",
    "ExportJob",
    "export_captions",
    "export_embeddings",
    "get_model",
    "model_string",
]
