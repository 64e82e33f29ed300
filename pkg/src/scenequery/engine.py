"""Query evaluation over the sampling grid.

A query is evaluated as a boolean at every grid point t = k*dt (t < session
duration), then maximal true runs become half-open scene segments
[t_first, t_last + dt).  Every AST node's boolean signal is kept as a
run-length-encoded trace so a client can show how each block contributed.

Subtree results are cached under their canonical form, which is what makes
parameter sweeps cheap: only the subtree containing the swept parameter is
recomputed per value.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import threading
from collections import OrderedDict
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import (
    BadParameterPath,
    PersonMissingFeature,
    PersonUnknown,
    UnknownProvenance,
    ValidationFailed,
)
from .query import (
    And,
    CountAtLeast,
    Equals,
    FeaturePredicate,
    GreaterThan,
    IsActive,
    LessThan,
    Not,
    Or,
    QueryNode,
    TextContains,
    canonicalize,
    from_document,
    validate,
)
from .store import EventTrack, IntervalTrack, NumericTrack, SessionBundle

_EPS = 1e-9


@dataclass(frozen=True)
class EvaluationConfig:
    sampling_period_s: float = 0.1
    merge_gap_s: float = 0.0
    min_segment_s: float = 0.0

    def __post_init__(self):
        if self.sampling_period_s <= 0:
            raise ValueError("sampling_period_s must be > 0")
        if self.merge_gap_s < 0 or self.min_segment_s < 0:
            raise ValueError("merge_gap_s and min_segment_s must be >= 0")

    def to_json(self) -> dict:
        return {
            "sampling_period_s": self.sampling_period_s,
            "merge_gap_s": self.merge_gap_s,
            "min_segment_s": self.min_segment_s,
        }


@dataclass(frozen=True)
class SceneSegment:
    start: float
    end: float
    person: str


@dataclass(frozen=True)
class BooleanTrace:
    """RLE boolean signal of one AST node; runs tile the grid exactly once."""

    node_path: str
    runs: tuple[tuple[int, int], ...]  # (value 0|1, sample count)

    def to_json(self) -> list[list[int]]:
        return [[v, c] for v, c in self.runs]


@dataclass(frozen=True)
class SweepResult:
    parameter_path: str
    values: tuple[float, ...]
    segment_counts: tuple[int, ...]
    total_durations_s: tuple[float, ...]

    def to_json(self) -> dict:
        return {
            "schema_version": "1",
            "parameter_path": self.parameter_path,
            "values": list(self.values),
            "segment_counts": list(self.segment_counts),
            "total_durations_s": list(self.total_durations_s),
        }


class TraceCache:
    """Per-node boolean signals keyed by (person, dt, canonical subtree).

    Scope one instance to one bundle; correctness never depends on contents
    (a hit is byte-identical to a fresh evaluation by construction).
    Concurrent readers are fine; inserts are serialized.
    """

    def __init__(self, max_entries: int = 4096):
        self._entries: OrderedDict[tuple, np.ndarray] = OrderedDict()
        self._max = max_entries
        self._lock = threading.Lock()

    def get(self, key: tuple) -> Optional[np.ndarray]:
        with self._lock:
            mask = self._entries.get(key)
            if mask is not None:
                self._entries.move_to_end(key)
            return mask

    def put(self, key: tuple, mask: np.ndarray) -> None:
        mask.flags.writeable = False
        with self._lock:
            self._entries[key] = mask
            if len(self._entries) > self._max:
                self._entries.popitem(last=False)

    def __len__(self) -> int:
        return len(self._entries)


# -- grid arithmetic ----------------------------------------------------------

def _first_index_at_or_after(x: float, dt: float) -> int:
    """Smallest integer k with k*dt >= x, exact under float rounding (x >= 0)."""
    k = max(0, math.ceil(x / dt - _EPS))
    while k * dt < x:
        k += 1
    while k > 0 and (k - 1) * dt >= x:
        k -= 1
    return k


def grid_size(duration: float, dt: float) -> int:
    """Number of grid samples; t = duration itself is excluded."""
    return _first_index_at_or_after(duration, dt)


def grid_times(duration: float, dt: float) -> np.ndarray:
    return np.arange(grid_size(duration, dt)) * dt


def _span_to_slice(start: float, end: float, dt: float, n: int) -> tuple[int, int]:
    """Grid index range [k0, k1) covering {k : start <= k*dt < end}."""
    k0 = min(n, _first_index_at_or_after(start, dt))
    k1 = min(n, _first_index_at_or_after(end, dt))
    return k0, k1


# -- leaf evaluation ----------------------------------------------------------

def _payload_matches(payload, attribute: Optional[str], pred) -> bool:
    if isinstance(pred, IsActive):
        return True
    value = payload.get(attribute) if attribute else None
    if value is None:
        return False
    if isinstance(pred, TextContains):
        if not isinstance(value, str):
            return False
        if pred.case_insensitive:
            return pred.pattern.casefold() in value.casefold()
        return pred.pattern in value
    if isinstance(pred, Equals):
        return isinstance(value, str) and value == pred.label
    if isinstance(pred, (GreaterThan, LessThan)):
        if isinstance(value, str):
            return False
        v = float(value)
        return v > pred.threshold if isinstance(pred, GreaterThan) else v < pred.threshold
    return False


def _leaf_mask(leaf: FeaturePredicate, bundle: SessionBundle, person: str,
               grid: np.ndarray, dt: float) -> np.ndarray:
    track = bundle.track(person, leaf.feature)
    if track is None:
        raise PersonMissingFeature(person, leaf.feature)
    n = len(grid)
    pred = leaf.predicate

    if isinstance(track, NumericTrack):
        ts = np.asarray(track.ts)
        values = np.asarray(track.values)
        idx = np.searchsorted(ts, grid, side="right") - 1
        defined = idx >= 0
        sampled = values[np.maximum(idx, 0)] if len(values) else np.zeros(n)
        if isinstance(pred, GreaterThan):
            return (sampled > pred.threshold) & defined
        if isinstance(pred, LessThan):
            return (sampled < pred.threshold) & defined
        raise ValueError(f"predicate {pred.op} not evaluable on numeric track")

    if isinstance(track, IntervalTrack):
        mask = np.zeros(n, dtype=bool)
        for iv in track.intervals:
            if _payload_matches(iv.payload, leaf.attribute, pred):
                k0, k1 = _span_to_slice(iv.start, iv.end, dt, n)
                mask[k0:k1] = True
        return mask

    assert isinstance(track, EventTrack)
    if isinstance(pred, CountAtLeast):
        ets = np.asarray([ev.t for ev in track.events])
        hi = np.searchsorted(ets, grid, side="right")
        lo = np.searchsorted(ets, grid - pred.window_s, side="right")
        return (hi - lo) >= pred.n
    if isinstance(pred, IsActive):
        mask = np.zeros(n, dtype=bool)
        for ev in track.events:
            k0, k1 = _span_to_slice(ev.t, ev.t + ev.dur, dt, n)
            mask[k0:k1] = True
        return mask
    raise ValueError(f"predicate {pred.op} not evaluable on event track")


# -- evaluation ---------------------------------------------------------------

def _eval_node(node: QueryNode, path: str, bundle: SessionBundle, person: str,
               grid: np.ndarray, dt: float, cache: Optional[TraceCache],
               traces: Optional[dict]) -> np.ndarray:
    key = (person, dt, canonicalize(node)) if cache is not None else None
    mask = cache.get(key) if cache is not None else None
    hit = mask is not None

    if not hit or traces is not None:
        # Even on a cache hit, recurse when traces are requested so every
        # node path appears in the trace map.
        if isinstance(node, FeaturePredicate):
            child_masks = []
        elif isinstance(node, Not):
            child_masks = [_eval_node(node.child, f"{path}.0", bundle, person, grid, dt, cache, traces)]
        else:
            child_masks = [
                _eval_node(child, f"{path}.{i}", bundle, person, grid, dt, cache, traces)
                for i, child in enumerate(node.children)
            ]
        if not hit:
            if isinstance(node, FeaturePredicate):
                mask = _leaf_mask(node, bundle, person, grid, dt)
            elif isinstance(node, Not):
                mask = ~child_masks[0]
            elif isinstance(node, And):
                mask = np.logical_and.reduce(child_masks)
            else:
                mask = np.logical_or.reduce(child_masks)
            if cache is not None:
                cache.put(key, mask)

    if traces is not None:
        traces[path] = mask
    return mask


def mask_to_runs(mask: np.ndarray) -> tuple[tuple[int, int], ...]:
    n = len(mask)
    if n == 0:
        return ()
    m = mask.astype(np.int8)
    change = np.flatnonzero(np.diff(m) != 0) + 1
    bounds = [0, *change.tolist(), n]
    return tuple((int(m[a]), b - a) for a, b in zip(bounds, bounds[1:]))


def _segments_from_mask(mask: np.ndarray, person: str, cfg: EvaluationConfig) -> list[SceneSegment]:
    dt = cfg.sampling_period_s
    n = len(mask)
    if n == 0 or not mask.any():
        return []
    m = mask.astype(np.int8)
    d = np.diff(m)
    starts = (np.flatnonzero(d == 1) + 1).tolist()
    ends = (np.flatnonzero(d == -1) + 1).tolist()
    if m[0]:
        starts.insert(0, 0)
    if m[-1]:
        ends.append(n)
    spans = [(k0 * dt, k1 * dt) for k0, k1 in zip(starts, ends)]

    merged: list[tuple[float, float]] = []
    for start, end in spans:
        if merged and start - merged[-1][1] <= cfg.merge_gap_s + _EPS:
            merged[-1] = (merged[-1][0], end)
        else:
            merged.append((start, end))
    return [
        SceneSegment(start=s, end=e, person=person)
        for s, e in merged
        if e - s >= cfg.min_segment_s - _EPS
    ]


def evaluate(node: QueryNode, bundle: SessionBundle, person: str, cfg: EvaluationConfig,
             cache: Optional[TraceCache] = None,
             ) -> tuple[list[SceneSegment], dict[str, BooleanTrace]]:
    """Evaluate a validated query for one person; returns segments and all node traces.

    A missing track for the bound person raises PersonMissingFeature rather
    than evaluating to false, so a person with e.g. no vision tracks is
    reported instead of silently matching nothing.
    """
    if person not in bundle.persons:
        raise PersonUnknown(f"person {person!r} not in session")
    dt = cfg.sampling_period_s
    grid = grid_times(bundle.duration, dt)
    raw_traces: dict[str, np.ndarray] = {}
    root_mask = _eval_node(node, "root", bundle, person, grid, dt, cache, raw_traces)
    segments = _segments_from_mask(root_mask, person, cfg)
    traces = {
        path: BooleanTrace(node_path=path, runs=mask_to_runs(mask))
        for path, mask in raw_traces.items()
    }
    return segments, traces


# -- parameter sweeps ---------------------------------------------------------

_SWEEPABLE = {
    GreaterThan: {"threshold": float},
    LessThan: {"threshold": float},
    CountAtLeast: {"n": int, "window_s": float},
}


def resolve_parameter(node: QueryNode, parameter_path: str) -> tuple[list[int], str, type]:
    """Split "root.<i>...<param>" into child indices + parameter name."""
    tokens = parameter_path.split(".")
    if not tokens or tokens[0] != "root" or len(tokens) < 2:
        raise BadParameterPath(f"parameter path must look like 'root...<param>': {parameter_path!r}")
    param = tokens[-1]
    indices = []
    current = node
    for tok in tokens[1:-1]:
        if not tok.isdigit():
            raise BadParameterPath(f"bad path element {tok!r} in {parameter_path!r}")
        i = int(tok)
        if isinstance(current, (And, Or)) and i < len(current.children):
            current = current.children[i]
        elif isinstance(current, Not) and i == 0:
            current = current.child
        else:
            raise BadParameterPath(f"no child {i} at {'.'.join(tokens[:-1])}")
        indices.append(i)
    if not isinstance(current, FeaturePredicate):
        raise BadParameterPath(f"{parameter_path!r} does not address a feature block")
    params = _SWEEPABLE.get(type(current.predicate), {})
    if param not in params:
        raise BadParameterPath(f"{current.predicate.op} has no numeric parameter {param!r}")
    return indices, param, params[param]


def _with_parameter(node: QueryNode, indices: list[int], param: str, value: float) -> QueryNode:
    if not indices:
        assert isinstance(node, FeaturePredicate)
        pred = dataclasses.replace(node.predicate, **{param: value})
        return dataclasses.replace(node, predicate=pred)
    i, rest = indices[0], indices[1:]
    if isinstance(node, Not):
        return Not(child=_with_parameter(node.child, rest, param, value))
    assert isinstance(node, (And, Or))
    children = list(node.children)
    children[i] = _with_parameter(children[i], rest, param, value)
    return dataclasses.replace(node, children=tuple(children))


def sweep(node: QueryNode, bundle: SessionBundle, person: str, cfg: EvaluationConfig,
          parameter_path: str, lo: float, hi: float, steps: int,
          cache: Optional[TraceCache] = None) -> SweepResult:
    """Evaluate at ``steps`` evenly spaced parameter values, endpoints included."""
    if steps < 2:
        raise ValueError("steps must be >= 2")
    if not lo < hi:
        raise ValueError("lo must be < hi")
    indices, param, ptype = resolve_parameter(node, parameter_path)
    if cache is None:
        cache = TraceCache()
    values, counts, durations = [], [], []
    for i in range(steps):
        value = lo + i * (hi - lo) / (steps - 1)
        if ptype is int:
            value = max(1, round(value))
        varied = _with_parameter(node, indices, param, value)
        segments, _ = evaluate(varied, bundle, person, cfg, cache=cache)
        values.append(float(value))
        counts.append(len(segments))
        durations.append(float(sum(s.end - s.start for s in segments)))
    return SweepResult(
        parameter_path=parameter_path,
        values=tuple(values),
        segment_counts=tuple(counts),
        total_durations_s=tuple(durations),
    )


# -- canonical output payloads -------------------------------------------------

def to_json_bytes(obj: dict) -> bytes:
    """The one serializer for result payloads; byte-identical across CLI,
    service, and exported artifacts."""
    return (json.dumps(obj, ensure_ascii=False, indent=2) + "\n").encode("utf-8")


def result_payload(bundle: SessionBundle, person: str, node: QueryNode,
                   cfg: EvaluationConfig, segments: list[SceneSegment],
                   traces: dict[str, BooleanTrace]) -> dict:
    return {
        "schema_version": "1",
        "session_id": bundle.session_id,
        "person": person,
        "query_canonical": canonicalize(node),
        "config": cfg.to_json(),
        "segments": [{"start_s": s.start, "end_s": s.end} for s in segments],
        "traces": {path: trace.to_json() for path, trace in sorted(traces.items())},
    }


def evaluate_headless(document_text: str, bundle_path, person: str,
                      cfg: Optional[EvaluationConfig] = None,
                      derivation=None) -> dict:
    """UI-free execution of a query document against a bundle directory."""
    from .store import load_bundle

    bundle = load_bundle(bundle_path, derivation=derivation)
    node = from_document(document_text)
    errors = validate(node, bundle)
    if errors:
        raise ValidationFailed(errors)
    if cfg is None:
        cfg = EvaluationConfig(sampling_period_s=bundle.sampling_period_default)
    segments, traces = evaluate(node, bundle, person, cfg)
    return result_payload(bundle, person, node, cfg, segments, traces)


# -- result provenance and the report log --------------------------------------

def provenance_token(payload: dict) -> str:
    basis = json.dumps(
        {
            "session_id": payload["session_id"],
            "person": payload["person"],
            "query_canonical": payload["query_canonical"],
            "config": payload["config"],
            "segments": payload["segments"],
        },
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(basis.encode("utf-8")).hexdigest()


class ReportLog:
    """Append-only log of segments users flagged as wrong.

    Reports are keyed by (canonical query, person, segment) so re-reporting
    is idempotent.  The log never feeds back into evaluation; it exists for
    offline review of the feature rules.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._known_ids: set[str] = set()
        self._results: dict[str, dict] = {}
        if self.path.is_file():
            with self.path.open(encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        self._known_ids.add(json.loads(line)["record_id"])

    def register(self, payload: dict) -> str:
        """Remember an evaluation result; returns its provenance token."""
        token = provenance_token(payload)
        with self._lock:
            self._results[token] = {
                "session_id": payload["session_id"],
                "person": payload["person"],
                "query_canonical": payload["query_canonical"],
                "segments": {(s["start_s"], s["end_s"]) for s in payload["segments"]},
            }
        return token

    def report(self, provenance: str, segment: tuple[float, float], note: str = "") -> tuple[str, bool]:
        """Log one false-result report; returns (record_id, newly_created)."""
        with self._lock:
            result = self._results.get(provenance)
            if result is None:
                raise UnknownProvenance("provenance token does not match any evaluation")
            if tuple(segment) not in result["segments"]:
                raise UnknownProvenance("segment is not part of the referenced result")
            basis = f"{result['query_canonical']}|{result['person']}|{segment[0]!r}|{segment[1]!r}"
            record_id = hashlib.sha256(basis.encode("utf-8")).hexdigest()[:16]
            if record_id in self._known_ids:
                return record_id, False
            record = {
                "record_id": record_id,
                "created_at": datetime.now(timezone.utc).isoformat(),
                "session_id": result["session_id"],
                "person": result["person"],
                "query_canonical": result["query_canonical"],
                "segment": {"start_s": segment[0], "end_s": segment[1]},
                "note": note,
            }
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")
            self._known_ids.add(record_id)
            return record_id, True
