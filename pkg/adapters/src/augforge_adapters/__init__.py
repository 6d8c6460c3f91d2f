"""Reference extractors that produce augforge input files."""

__version__ = "0.1.0"

from .backends import StubBackend, make_backend
from .extract import extract_detections, extract_embeddings, run_teachers

__all__ = [
    "StubBackend",
    "extract_detections",
    "extract_embeddings",
    "make_backend",
    "run_teachers",
    "__version__",
]
