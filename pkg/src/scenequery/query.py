"""The query language: AST, validation, documents, canonical form.

A query is a tree of feature predicates combined with n-ary And/Or and Not.
The JSON document form is the sharing/export unit; the canonical form is a
normalized text rendering used for deduplication and trace caching — it
folds And/Or commutativity and double negation, nothing else, so a shared
diagram survives round-trips visually.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterator, Optional, Union

from .errors import ParseError, UnknownSchemaVersion
from .store import (
    NUMERIC_ATTRIBUTES,
    PAYLOAD_ATTRIBUTES,
    TEXT_ATTRIBUTES,
    SessionBundle,
)

SCHEMA_VERSION = "1"
MAX_DEPTH = 32
MAX_NODES = 256

# The one person slot every query has; it is bound to a concrete person id
# only at execution time.
TARGET_SLOT = "target"


# -- predicates ---------------------------------------------------------------

@dataclass(frozen=True)
class GreaterThan:
    threshold: float
    op = "gt"


@dataclass(frozen=True)
class LessThan:
    threshold: float
    op = "lt"


@dataclass(frozen=True)
class TextContains:
    pattern: str
    case_insensitive: bool = True
    op = "text_contains"


@dataclass(frozen=True)
class CountAtLeast:
    """At least ``n`` events inside the trailing window ``(t - window_s, t]``."""

    n: int
    window_s: float
    op = "count_at_least"


@dataclass(frozen=True)
class IsActive:
    op = "is_active"


@dataclass(frozen=True)
class Equals:
    label: str
    op = "equals"


Predicate = Union[GreaterThan, LessThan, TextContains, CountAtLeast, IsActive, Equals]


# -- nodes --------------------------------------------------------------------

@dataclass(frozen=True)
class FeaturePredicate:
    feature: str
    predicate: Predicate
    attribute: Optional[str] = None
    kind = "feature"


@dataclass(frozen=True)
class And:
    children: tuple["QueryNode", ...]
    kind = "and"


@dataclass(frozen=True)
class Or:
    children: tuple["QueryNode", ...]
    kind = "or"


@dataclass(frozen=True)
class Not:
    child: "QueryNode"
    kind = "not"


QueryNode = Union[FeaturePredicate, And, Or, Not]


def walk(node: QueryNode, path: str = "root") -> Iterator[tuple[str, QueryNode]]:
    """Yield (node_path, node), depth first; children are ``<path>.<index>``."""
    yield path, node
    if isinstance(node, (And, Or)):
        for i, child in enumerate(node.children):
            yield from walk(child, f"{path}.{i}")
    elif isinstance(node, Not):
        yield from walk(node.child, f"{path}.0")


def used_features(node: QueryNode) -> set[str]:
    return {n.feature for _, n in walk(node) if isinstance(n, FeaturePredicate)}


def depth(node: QueryNode) -> int:
    if isinstance(node, FeaturePredicate):
        return 1
    if isinstance(node, Not):
        return 1 + depth(node.child)
    return 1 + max(depth(c) for c in node.children)


# -- validation ---------------------------------------------------------------

@dataclass(frozen=True)
class ValidationError:
    path: str
    code: str
    message: str

    def to_json(self) -> dict:
        return {"path": self.path, "code": self.code, "message": self.message}


def validate_structure(node: QueryNode) -> list[ValidationError]:
    """Bundle-independent checks: arity, limits, predicate parameter sanity."""
    errors: list[ValidationError] = []
    nodes = list(walk(node))
    if len(nodes) > MAX_NODES:
        errors.append(ValidationError("root", "size_exceeded", f"query has {len(nodes)} nodes (max {MAX_NODES})"))
    if depth(node) > MAX_DEPTH:
        errors.append(ValidationError("root", "depth_exceeded", f"query depth exceeds {MAX_DEPTH}"))
    for path, n in nodes:
        if isinstance(n, (And, Or)) and len(n.children) < 2:
            errors.append(ValidationError(path, "arity_violation", f"{n.kind} needs at least 2 children"))
        elif isinstance(n, FeaturePredicate):
            pred = n.predicate
            if isinstance(pred, (GreaterThan, LessThan)) and not math.isfinite(pred.threshold):
                errors.append(ValidationError(path, "bad_threshold", "threshold must be finite"))
            elif isinstance(pred, TextContains) and not pred.pattern:
                errors.append(ValidationError(path, "empty_pattern", "pattern must be non-empty"))
            elif isinstance(pred, CountAtLeast):
                if pred.n < 1:
                    errors.append(ValidationError(path, "bad_count", "n must be >= 1"))
                if not (math.isfinite(pred.window_s) and pred.window_s > 0):
                    errors.append(ValidationError(path, "bad_window", "window_s must be > 0"))
            if n.attribute is not None and n.attribute not in PAYLOAD_ATTRIBUTES:
                errors.append(ValidationError(path, "unknown_attribute", f"unknown attribute {n.attribute!r}"))
    return errors


def validate(node: QueryNode, bundle: SessionBundle) -> list[ValidationError]:
    """Structural and type checks; returns an empty list when the query is ok.

    Never raises: every problem is reported with the offending node path.
    """
    errors = validate_structure(node)
    seen = {(e.path, e.code) for e in errors}
    for path, n in walk(node):
        if isinstance(n, FeaturePredicate):
            errors.extend(
                e for e in _check_leaf(path, n, bundle) if (e.path, e.code) not in seen
            )
    return errors


def _check_leaf(path: str, n: FeaturePredicate, bundle: SessionBundle) -> list[ValidationError]:
    errors: list[ValidationError] = []
    kind = bundle.feature_kind(n.feature)
    if kind is None:
        errors.append(ValidationError(path, "unknown_feature", f"feature {n.feature!r} exists for no person in the session"))
        return errors

    pred = n.predicate
    if isinstance(pred, (GreaterThan, LessThan)):
        if kind == "numeric":
            if n.attribute is not None:
                errors.append(ValidationError(path, "attribute_not_allowed", "numeric features take no attribute"))
        elif kind == "interval":
            if n.attribute is None:
                errors.append(ValidationError(path, "attribute_required", f"{pred.op} on an interval feature needs a numeric attribute"))
            elif n.attribute in PAYLOAD_ATTRIBUTES and n.attribute not in NUMERIC_ATTRIBUTES:
                errors.append(ValidationError(path, "type_mismatch", f"attribute {n.attribute!r} is not numeric"))
        else:
            errors.append(ValidationError(path, "type_mismatch", f"{pred.op} does not apply to event features"))
    elif isinstance(pred, (TextContains, Equals)):
        if kind != "interval":
            errors.append(ValidationError(path, "type_mismatch", f"{pred.op} applies only to interval features"))
        elif n.attribute is None:
            errors.append(ValidationError(path, "attribute_required", f"{pred.op} needs a text attribute"))
        elif n.attribute in PAYLOAD_ATTRIBUTES and n.attribute not in TEXT_ATTRIBUTES:
            errors.append(ValidationError(path, "type_mismatch", f"attribute {n.attribute!r} is not text"))
    elif isinstance(pred, CountAtLeast):
        if kind != "event":
            errors.append(ValidationError(path, "type_mismatch", "count_at_least applies only to event features"))
        if n.attribute is not None:
            errors.append(ValidationError(path, "attribute_not_allowed", "count_at_least takes no attribute"))
    elif isinstance(pred, IsActive):
        if kind == "numeric":
            errors.append(ValidationError(path, "type_mismatch", "is_active applies to interval or event features"))
        if n.attribute is not None:
            errors.append(ValidationError(path, "attribute_not_allowed", "is_active takes no attribute"))
    else:
        errors.append(ValidationError(path, "unknown_predicate", f"unsupported predicate {pred!r}"))
    return errors


# -- JSON documents -----------------------------------------------------------

def _num(x: float) -> int | float:
    """Integral values render without a decimal point (shortest round-trip)."""
    if isinstance(x, float) and x.is_integer() and abs(x) < 1e15:
        return int(x)
    return x


def _predicate_to_json(pred: Predicate) -> dict:
    if isinstance(pred, GreaterThan):
        return {"op": "gt", "threshold": _num(pred.threshold)}
    if isinstance(pred, LessThan):
        return {"op": "lt", "threshold": _num(pred.threshold)}
    if isinstance(pred, TextContains):
        return {"op": "text_contains", "pattern": pred.pattern, "case_insensitive": pred.case_insensitive}
    if isinstance(pred, CountAtLeast):
        return {"op": "count_at_least", "n": pred.n, "window_s": _num(pred.window_s)}
    if isinstance(pred, IsActive):
        return {"op": "is_active"}
    if isinstance(pred, Equals):
        return {"op": "equals", "label": pred.label}
    raise TypeError(f"unknown predicate {pred!r}")


def node_to_json(node: QueryNode) -> dict:
    if isinstance(node, FeaturePredicate):
        out: dict = {"kind": "feature", "feature": node.feature}
        if node.attribute is not None:
            out["attribute"] = node.attribute
        out["predicate"] = _predicate_to_json(node.predicate)
        return out
    if isinstance(node, (And, Or)):
        return {"kind": node.kind, "children": [node_to_json(c) for c in node.children]}
    if isinstance(node, Not):
        return {"kind": "not", "child": node_to_json(node.child)}
    raise TypeError(f"unknown node {node!r}")


def to_document(node: QueryNode) -> str:
    """Serialize to the shareable JSON document (schema_version "1")."""
    doc = {"schema_version": SCHEMA_VERSION, "root": node_to_json(node)}
    return json.dumps(doc, ensure_ascii=False, separators=(",", ":"))


def _expect(cond: bool, expected: str) -> None:
    if not cond:
        raise ParseError(f"expected {expected}", expected=expected)


def _float_param(obj: dict, key: str) -> float:
    _expect(key in obj, f"predicate field {key!r}")
    v = obj[key]
    _expect(isinstance(v, (int, float)) and not isinstance(v, bool), f"number for {key!r}")
    return float(v)


def _predicate_from_json(obj: dict) -> Predicate:
    _expect(isinstance(obj, dict) and "op" in obj, "predicate object with 'op'")
    op = obj["op"]
    if op == "gt":
        return GreaterThan(threshold=_float_param(obj, "threshold"))
    if op == "lt":
        return LessThan(threshold=_float_param(obj, "threshold"))
    if op == "text_contains":
        _expect(isinstance(obj.get("pattern"), str), "string 'pattern'")
        return TextContains(pattern=obj["pattern"], case_insensitive=bool(obj.get("case_insensitive", True)))
    if op == "count_at_least":
        n = obj.get("n")
        _expect(isinstance(n, int) and not isinstance(n, bool), "integer 'n'")
        return CountAtLeast(n=n, window_s=_float_param(obj, "window_s"))
    if op == "is_active":
        return IsActive()
    if op == "equals":
        _expect(isinstance(obj.get("label"), str), "string 'label'")
        return Equals(label=obj["label"])
    raise ParseError(f"unknown predicate op {op!r}", expected="one of gt|lt|text_contains|count_at_least|is_active|equals")


def node_from_json(obj: object) -> QueryNode:
    _expect(isinstance(obj, dict) and "kind" in obj, "node object with 'kind'")
    kind = obj["kind"]
    if kind == "feature":
        _expect(isinstance(obj.get("feature"), str) and obj["feature"], "string 'feature'")
        attribute = obj.get("attribute")
        _expect(attribute is None or isinstance(attribute, str), "string 'attribute'")
        return FeaturePredicate(
            feature=obj["feature"],
            attribute=attribute,
            predicate=_predicate_from_json(obj.get("predicate", {})),
        )
    if kind in ("and", "or"):
        children = obj.get("children")
        _expect(isinstance(children, list), "'children' list")
        parsed = tuple(node_from_json(c) for c in children)
        return And(children=parsed) if kind == "and" else Or(children=parsed)
    if kind == "not":
        _expect("child" in obj, "'child' node")
        return Not(child=node_from_json(obj["child"]))
    raise ParseError(f"unknown node kind {kind!r}", expected="one of feature|and|or|not")


def from_document(text: str) -> QueryNode:
    """Parse a query document; inverse of to_document on valid ASTs."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno, col=exc.colno, expected="JSON document")
    _expect(isinstance(doc, dict), "top-level JSON object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise UnknownSchemaVersion(f"unsupported schema_version {version!r}")
    _expect("root" in doc, "'root' node")
    return node_from_json(doc["root"])


# -- canonical form -----------------------------------------------------------

def _normalize(node: QueryNode) -> QueryNode:
    if isinstance(node, Not):
        child = _normalize(node.child)
        if isinstance(child, Not):
            return child.child
        return Not(child=child)
    if isinstance(node, (And, Or)):
        children = sorted((_normalize(c) for c in node.children), key=_render)
        cls = And if isinstance(node, And) else Or
        return cls(children=tuple(children))
    return node


def _render(node: QueryNode) -> str:
    return json.dumps(node_to_json(node), ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def canonicalize(node: QueryNode) -> str:
    """Canonical text of a query: And/Or children sorted, Not(Not(x)) folded.

    Equal canonical texts identify queries that differ only by And/Or child
    order or double negation; De Morgan rewrites are deliberately not folded.
    """
    return _render(_normalize(node))


def canonical_node(text: str) -> QueryNode:
    """Parse a canonical form (or any bare node JSON) back into an AST."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno, col=exc.colno, expected="node JSON")
    return node_from_json(obj)
