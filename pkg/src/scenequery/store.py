"""Timestamp-aligned feature storage for one recorded conversation.

A session bundle is a directory of small files (manifest + one file per
track) so that tracks produced by heterogeneous upstream extractors can be
supplied independently.  Everything is immutable after load; all derived
features are computed and attached before the bundle is returned, so the
engine only ever reads.

Time convention: seconds from session start, half-open intervals
``[start, end)`` everywhere.
"""

from __future__ import annotations

import csv
import json
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Optional, Union

from .errors import (
    MissingManifest,
    OverlappingIntervals,
    SchemaViolation,
    TimestampOutOfRange,
)

# Queryable payload attribute names form a closed registry; "numeric" here
# includes booleans (coerced to 1.0 / 0.0 under threshold predicates).
TEXT_ATTRIBUTES = frozenset({"text", "speaker", "label"})
NUMERIC_ATTRIBUTES = frozenset(
    {
        "filler_count",
        "backchannel_count",
        "char_count",
        "speech_speed",
        "speech_length_s",
        "interval_before_s",
        "is_question",
        "overlap",
    }
)
PAYLOAD_ATTRIBUTES = TEXT_ATTRIBUTES | NUMERIC_ATTRIBUTES

UTTERANCE = "utterance"
VOICE_ACTIVITY = "voice_activity"

# One-line blurbs served with session metadata so a client can label feature
# blocks without hard-coding knowledge about tracks.
FEATURE_DESCRIPTIONS = {
    "utterance": "speech turns with transcript text and per-turn statistics",
    "voice_activity": "time ranges where the person is speaking",
    "overlap": "time ranges where the person speaks over someone else",
    "nod": "detected head-nod events",
    "blink": "detected eye-blink events",
    "volume": "speech volume (windowed average amplitude)",
    "amplitude": "raw speech amplitude samples",
    "ear": "eye aspect ratio (low values mean closed eyes)",
    "head_y": "vertical head position, normalized to inter-ocular distance",
    "pitch": "fundamental voice frequency (F0) in Hz",
    "intonation": "intonation contour (ingest-only, no derivation)",
    "expression": "facial expression label over time",
    "sentiment": "utterance sentiment label over time",
    "gaze_x": "horizontal gaze angle",
    "gaze_y": "vertical gaze angle",
}


@dataclass(frozen=True)
class NumericTrack:
    """Sampled scalar signal, read back with zero-order hold."""

    ts: tuple[float, ...]
    values: tuple[float, ...]
    unit: str = ""

    kind = "numeric"

    def __len__(self) -> int:
        return len(self.ts)


@dataclass(frozen=True)
class Interval:
    start: float
    end: float
    payload: Mapping[str, object] = field(default_factory=dict)


@dataclass(frozen=True)
class IntervalTrack:
    """Non-overlapping, sorted half-open intervals with payload attributes."""

    intervals: tuple[Interval, ...]

    kind = "interval"

    def __len__(self) -> int:
        return len(self.intervals)


@dataclass(frozen=True)
class Event:
    t: float
    dur: float = 0.0


@dataclass(frozen=True)
class EventTrack:
    """Timed point events (nod, blink), ordered by time."""

    events: tuple[Event, ...]

    kind = "event"

    def __len__(self) -> int:
        return len(self.events)


Track = Union[NumericTrack, IntervalTrack, EventTrack]


@dataclass(frozen=True)
class SessionBundle:
    session_id: str
    duration: float
    persons: tuple[str, ...]
    tracks: Mapping[tuple[str, str], Track]
    sampling_period_default: float = 0.1

    def track(self, person: str, feature: str) -> Optional[Track]:
        return self.tracks.get((person, feature))

    def features_for(self, person: str) -> list[str]:
        return sorted(f for (p, f) in self.tracks if p == person)

    def feature_names(self) -> list[str]:
        return sorted({f for (_, f) in self.tracks})

    def feature_kind(self, feature: str) -> Optional[str]:
        for (_, f), track in self.tracks.items():
            if f == feature:
                return track.kind
        return None


def value_at(track: NumericTrack, t: float) -> Optional[float]:
    """Zero-order hold: latest sample at or before ``t``; None before the first."""
    i = bisect_right(track.ts, t) - 1
    if i < 0:
        return None
    return track.values[i]


def interval_at(track: IntervalTrack, t: float) -> Optional[Interval]:
    """The unique interval with ``start <= t < end``, or None."""
    starts = [iv.start for iv in track.intervals]
    i = bisect_right(starts, t) - 1
    if i < 0:
        return None
    iv = track.intervals[i]
    return iv if t < iv.end else None


# -- loading -----------------------------------------------------------------

def _require(cond: bool, file: str, line: int, msg: str) -> None:
    if not cond:
        raise SchemaViolation(file, line, msg)


def _check_range(t: float, duration: float, where: str) -> None:
    if not (0.0 <= t <= duration):
        raise TimestampOutOfRange(f"{where}: t={t} outside [0, {duration}]")


def _load_numeric(path: Path, duration: float, unit: str) -> NumericTrack:
    ts: list[float] = []
    values: list[float] = []
    fname = path.name
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        _require(header == ["t_s", "value"], fname, 1, "expected header 't_s,value'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            _require(len(row) == 2, fname, lineno, "expected two columns")
            try:
                t, v = float(row[0]), float(row[1])
            except ValueError:
                raise SchemaViolation(fname, lineno, f"non-numeric row {row!r}")
            _require(math.isfinite(t) and math.isfinite(v), fname, lineno, "non-finite value")
            _check_range(t, duration, f"{fname}:{lineno}")
            _require(not ts or t > ts[-1], fname, lineno, "t_s must be strictly increasing")
            ts.append(t)
            values.append(v)
    return NumericTrack(ts=tuple(ts), values=tuple(values), unit=unit)


def _load_events(path: Path, duration: float) -> EventTrack:
    events: list[Event] = []
    fname = path.name
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaViolation(fname, lineno, f"bad JSON: {exc.msg}")
            _require(isinstance(obj, dict) and "t_s" in obj, fname, lineno, "expected {t_s, dur_s}")
            t = float(obj["t_s"])
            dur = float(obj.get("dur_s", 0.0))
            _require(dur >= 0.0, fname, lineno, "dur_s must be >= 0")
            _check_range(t, duration, f"{fname}:{lineno}")
            _check_range(t + dur, duration, f"{fname}:{lineno} (event end)")
            _require(not events or t >= events[-1].t, fname, lineno, "events must be ordered by t_s")
            events.append(Event(t=t, dur=dur))
    return EventTrack(events=tuple(events))


def _load_intervals(path: Path, duration: float, person: str, feature: str) -> IntervalTrack:
    intervals: list[Interval] = []
    fname = path.name
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaViolation(fname, lineno, f"bad JSON: {exc.msg}")
            _require(
                isinstance(obj, dict) and "start_s" in obj and "end_s" in obj,
                fname, lineno, "expected {start_s, end_s, ...}",
            )
            start, end = float(obj.pop("start_s")), float(obj.pop("end_s"))
            _require(start < end, fname, lineno, "start_s must be < end_s")
            _check_range(start, duration, f"{fname}:{lineno}")
            _check_range(end, duration, f"{fname}:{lineno}")
            unknown = set(obj) - PAYLOAD_ATTRIBUTES
            _require(not unknown, fname, lineno, f"unknown payload attributes {sorted(unknown)}")
            intervals.append(Interval(start=start, end=end, payload=dict(obj)))
    intervals.sort(key=lambda iv: iv.start)
    for prev, cur in zip(intervals, intervals[1:]):
        if cur.start < prev.end:
            raise OverlappingIntervals(person, feature)
    return IntervalTrack(intervals=tuple(intervals))


def _load_utterances(path: Path, duration: float, persons: tuple[str, ...]) -> dict[str, IntervalTrack]:
    """Split the canonical transcript file into one raw utterance track per speaker.

    Optional word timings are validated for shape but not stored; they are not
    queryable attributes.
    """
    per_person: dict[str, list[Interval]] = {}
    fname = path.name
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaViolation(fname, lineno, f"bad JSON: {exc.msg}")
            for key in ("speaker", "start_s", "end_s", "text"):
                _require(key in obj, fname, lineno, f"missing field {key!r}")
            speaker = obj["speaker"]
            _require(speaker in persons, fname, lineno, f"unknown speaker {speaker!r}")
            start, end = float(obj["start_s"]), float(obj["end_s"])
            _require(start < end, fname, lineno, "start_s must be < end_s")
            _check_range(start, duration, f"{fname}:{lineno}")
            _check_range(end, duration, f"{fname}:{lineno}")
            words = obj.get("words", [])
            _require(
                isinstance(words, list)
                and all(isinstance(w, dict) and {"t0_s", "t1_s", "text"} <= set(w) for w in words),
                fname, lineno, "words must be a list of {t0_s, t1_s, text}",
            )
            payload = {"text": str(obj["text"]), "speaker": speaker}
            per_person.setdefault(speaker, []).append(Interval(start=start, end=end, payload=payload))
    tracks = {}
    for person, ivs in per_person.items():
        ivs.sort(key=lambda iv: iv.start)
        for prev, cur in zip(ivs, ivs[1:]):
            if cur.start < prev.end:
                raise OverlappingIntervals(person, UTTERANCE)
        tracks[person] = IntervalTrack(intervals=tuple(ivs))
    return tracks


def merge_intervals(intervals: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """Union of half-open intervals: sorted, overlapping/adjacent ranges merged."""
    out: list[tuple[float, float]] = []
    for start, end in sorted(intervals):
        if out and start <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], end))
        else:
            out.append((start, end))
    return out


def _clamp_events(track: EventTrack, duration: float) -> EventTrack:
    events = []
    for ev in track.events:
        if ev.t < 0.0 or ev.t >= duration:
            continue
        events.append(Event(t=ev.t, dur=min(ev.dur, duration - ev.t)))
    return EventTrack(events=tuple(events))


def load_bundle(path: str | Path, derivation=None) -> SessionBundle:
    """Load and validate a bundle directory; derive all rule-based features.

    ``derivation`` overrides the bundle's own derivation.json (used by
    exported standalone artifacts to pin their configuration).
    """
    from . import derive  # deferred: derive depends on the types above

    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise MissingManifest(f"no manifest.json in {root}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaViolation("manifest.json", exc.lineno, exc.msg)

    _require(manifest.get("schema_version") == "1", "manifest.json", 1, "schema_version must be '1'")
    for key in ("session_id", "duration_s", "persons"):
        _require(key in manifest, "manifest.json", 1, f"missing field {key!r}")
    duration = float(manifest["duration_s"])
    _require(duration > 0, "manifest.json", 1, "duration_s must be > 0")
    persons = tuple(manifest["persons"])
    _require(len(persons) > 0, "manifest.json", 1, "persons must be non-empty")
    _require(all(isinstance(p, str) and p for p in persons), "manifest.json", 1, "person ids must be non-empty strings")
    _require(len(set(persons)) == len(persons), "manifest.json", 1, "person ids must be unique")
    sampling = float(manifest.get("sampling_period_s", 0.1))
    _require(sampling > 0, "manifest.json", 1, "sampling_period_s must be > 0")

    if derivation is None:
        derivation = derive.DerivationConfig.from_file(root / "derivation.json")

    tracks: dict[tuple[str, str], Track] = {}
    kinds: dict[str, str] = {}

    def put(person: str, feature: str, track: Track) -> None:
        key = (person, feature)
        _require(key not in tracks, "manifest.json", 1, f"duplicate track {key}")
        _require(
            kinds.setdefault(feature, track.kind) == track.kind,
            "manifest.json", 1, f"feature {feature!r} declared with conflicting kinds",
        )
        tracks[key] = track

    for entry in manifest.get("tracks", []):
        for key in ("person", "feature", "kind", "file"):
            _require(key in entry, "manifest.json", 1, f"track entry missing {key!r}")
        person, feature = entry["person"], entry["feature"]
        _require(person in persons, "manifest.json", 1, f"track references unknown person {person!r}")
        fpath = root / entry["file"]
        if not fpath.is_file():
            raise SchemaViolation("manifest.json", 1, f"track file not found: {entry['file']}")
        kind = entry["kind"]
        if kind == "numeric":
            put(person, feature, _load_numeric(fpath, duration, entry.get("unit", "")))
        elif kind == "interval":
            put(person, feature, _load_intervals(fpath, duration, person, feature))
        elif kind == "event":
            put(person, feature, _load_events(fpath, duration))
        else:
            raise SchemaViolation("manifest.json", 1, f"unknown track kind {kind!r}")

    utt_path = root / "utterances.jsonl"
    if utt_path.is_file():
        for person, raw in _load_utterances(utt_path, duration, persons).items():
            put(person, UTTERANCE, derive.derive_utterance_attributes(raw, derivation))

    # Rule-based derivations; ingested tracks of the same name take precedence.
    utterance_tracks = {p: t for (p, f), t in tracks.items() if f == UTTERANCE}
    if utterance_tracks:
        flagged = derive.annotate_overlap_flags(utterance_tracks)
        for person, track in flagged.items():
            tracks[(person, UTTERANCE)] = track
        for person, track in derive.derive_overlap(utterance_tracks).items():
            if (person, "overlap") not in tracks:
                put(person, "overlap", track)
    for person, track in utterance_tracks.items():
        if (person, VOICE_ACTIVITY) not in tracks:
            merged = merge_intervals([(iv.start, iv.end) for iv in track.intervals])
            put(person, VOICE_ACTIVITY, IntervalTrack(
                intervals=tuple(Interval(start=s, end=e) for s, e in merged)))
    for person in persons:
        amp = tracks.get((person, "amplitude"))
        if isinstance(amp, NumericTrack) and (person, "volume") not in tracks:
            put(person, "volume", derive.derive_volume(amp, derivation))
        ear = tracks.get((person, "ear"))
        if isinstance(ear, NumericTrack) and (person, "blink") not in tracks:
            put(person, "blink", _clamp_events(derive.derive_blinks(ear, derivation), duration))
        head_y = tracks.get((person, "head_y"))
        if isinstance(head_y, NumericTrack) and (person, "nod") not in tracks:
            put(person, "nod", _clamp_events(derive.derive_nods(head_y, derivation), duration))

    return SessionBundle(
        session_id=str(manifest["session_id"]),
        duration=duration,
        persons=persons,
        tracks=tracks,
        sampling_period_default=sampling,
    )


def iter_track_descriptors(bundle: SessionBundle, include_data: bool = False) -> Iterator[dict]:
    """Track metadata for clients; raw payloads only when explicitly asked for."""
    for (person, feature), track in sorted(bundle.tracks.items()):
        desc: dict[str, object] = {"person": person, "feature": feature, "kind": track.kind}
        if isinstance(track, NumericTrack) and track.unit:
            desc["unit"] = track.unit
        if include_data:
            if isinstance(track, NumericTrack):
                desc["data"] = [{"t_s": t, "value": v} for t, v in zip(track.ts, track.values)]
            elif isinstance(track, IntervalTrack):
                desc["data"] = [
                    {"start_s": iv.start, "end_s": iv.end, **iv.payload} for iv in track.intervals
                ]
            else:
                desc["data"] = [{"t_s": ev.t, "dur_s": ev.dur} for ev in track.events]
        yield desc
