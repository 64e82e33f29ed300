"""Error types shared across the package.

Every error carries a machine ``code`` so the CLI and the HTTP service can
map it to exit codes / status codes without string matching.
"""

from __future__ import annotations


class SceneQueryError(Exception):
    """Base class; ``code`` is the stable machine identifier."""

    code = "error"

    def __init__(self, message: str, detail: object = None):
        super().__init__(message)
        self.message = message
        self.detail = detail

    def to_json(self) -> dict:
        out = {"code": self.code, "message": self.message}
        if self.detail is not None:
            out["detail"] = self.detail
        return out


# -- bundle loading ----------------------------------------------------------

class MissingManifest(SceneQueryError):
    code = "missing_manifest"


class SchemaViolation(SceneQueryError):
    code = "schema_violation"

    def __init__(self, file: str, line: int, message: str):
        super().__init__(f"{file}:{line}: {message}", {"file": file, "line": line})
        self.file = file
        self.line = line


class TimestampOutOfRange(SceneQueryError):
    code = "timestamp_out_of_range"


class OverlappingIntervals(SceneQueryError):
    code = "overlapping_intervals"

    def __init__(self, person: str, feature: str, message: str = ""):
        super().__init__(
            message or f"overlapping intervals in ({person}, {feature})",
            {"person": person, "feature": feature},
        )
        self.person = person
        self.feature = feature


# -- query documents ---------------------------------------------------------

class ParseError(SceneQueryError):
    code = "parse_error"

    def __init__(self, message: str, line: int = 0, col: int = 0, expected: str = ""):
        super().__init__(message, {"line": line, "col": col, "expected": expected})
        self.line = line
        self.col = col
        self.expected = expected


class UnknownSchemaVersion(SceneQueryError):
    code = "unknown_schema_version"


class ValidationFailed(SceneQueryError):
    """Raised by callers that require a clean validate(); wraps the error list."""

    code = "validation_failed"

    def __init__(self, errors: list):
        super().__init__(
            "; ".join(e.message for e in errors) or "invalid query",
            [e.to_json() for e in errors],
        )
        self.errors = errors


# -- engine ------------------------------------------------------------------

class PersonMissingFeature(SceneQueryError):
    code = "person_missing_feature"

    def __init__(self, person: str, feature: str):
        super().__init__(
            f"person {person!r} has no {feature!r} track",
            {"person": person, "feature": feature},
        )
        self.person = person
        self.feature = feature


class PersonUnknown(SceneQueryError):
    code = "person_unknown"


class BadParameterPath(SceneQueryError):
    code = "bad_parameter_path"


class UnknownProvenance(SceneQueryError):
    code = "unknown_provenance"


# -- repository / io ---------------------------------------------------------

class InvalidDocument(SceneQueryError):
    code = "invalid_document"


class EntryNotFound(SceneQueryError):
    code = "entry_not_found"


class StorageError(SceneQueryError):
    code = "storage_error"


class IoError(SceneQueryError):
    code = "io_error"
