"""Scene search over time-aligned multimodal behavior features of conversations."""

from .derive import DerivationConfig
from .engine import (
    EvaluationConfig,
    ReportLog,
    SceneSegment,
    SweepResult,
    TraceCache,
    evaluate,
    evaluate_headless,
    sweep,
)
from .query import canonicalize, from_document, to_document, validate
from .repo import DuplicateOf, QueryRepository
from .store import SessionBundle, load_bundle

__version__ = "0.1.0"

__all__ = [
    "DerivationConfig",
    "DuplicateOf",
    "EvaluationConfig",
    "QueryRepository",
    "ReportLog",
    "SceneSegment",
    "SessionBundle",
    "SweepResult",
    "TraceCache",
    "canonicalize",
    "evaluate",
    "evaluate_headless",
    "from_document",
    "load_bundle",
    "sweep",
    "to_document",
    "validate",
    "__version__",
]
