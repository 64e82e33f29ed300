"""Rule-based feature derivation from primitive tracks.

These run once at bundle load time.  All functions are pure: same inputs and
config give identical outputs, so derived tracks can be cached with the
bundle.  Features that upstream ML models produce (gaze, head pose, facial
expression, sentiment, F0) are ingest-only and have no derivation here.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

from .errors import SchemaViolation
from .store import Event, EventTrack, Interval, IntervalTrack, NumericTrack, merge_intervals

# Keeps hyphenated tokens ("uh-huh") whole while stripping edge punctuation.
_TOKEN_RE = re.compile(r"[\w'\-]+")


def _default_words(name: str) -> tuple[str, ...]:
    text = resources.files("scenequery.data").joinpath(name).read_text(encoding="utf-8")
    return tuple(w.strip().lower() for w in text.splitlines() if w.strip())


@dataclass(frozen=True)
class DerivationConfig:
    filler_words: tuple[str, ...] = field(default_factory=lambda: _default_words("filler_words.txt"))
    backchannel_words: tuple[str, ...] = field(default_factory=lambda: _default_words("backchannel_words.txt"))
    question_markers: tuple[str, ...] = field(default_factory=lambda: _default_words("question_markers.txt"))
    volume_window_s: float = 0.5
    ear_threshold: float = 0.2
    ear_min_consecutive: int = 2
    nod_window_s: float = 1.0
    nod_min_displacement: float = 0.03
    nod_min_direction_changes: int = 2

    def __post_init__(self):
        if self.volume_window_s <= 0 or self.nod_window_s <= 0:
            raise ValueError("windows must be > 0")
        if self.ear_min_consecutive < 1:
            raise ValueError("ear_min_consecutive must be >= 1")
        for name in ("filler_words", "backchannel_words", "question_markers"):
            words = getattr(self, name)
            if any((not w) or w != w.lower() for w in words):
                raise ValueError(f"{name} entries must be lowercase and non-empty")

    @classmethod
    def from_file(cls, path: str | Path) -> "DerivationConfig":
        """Read overrides from a derivation.json; defaults apply when absent."""
        path = Path(path)
        if not path.is_file():
            return cls()
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise SchemaViolation(path.name, exc.lineno, exc.msg)
        if not isinstance(raw, dict):
            raise SchemaViolation(path.name, 1, "expected a JSON object")
        known = {f.name for f in cls.__dataclass_fields__.values()}  # type: ignore[attr-defined]
        unknown = set(raw) - known
        if unknown:
            raise SchemaViolation(path.name, 1, f"unknown keys {sorted(unknown)}")
        for key in ("filler_words", "backchannel_words", "question_markers"):
            if key in raw:
                raw[key] = tuple(raw[key])
        try:
            return replace(cls(), **raw)
        except ValueError as exc:
            raise SchemaViolation(path.name, 1, str(exc))

    def to_json(self) -> dict:
        return {
            "filler_words": list(self.filler_words),
            "backchannel_words": list(self.backchannel_words),
            "question_markers": list(self.question_markers),
            "volume_window_s": self.volume_window_s,
            "ear_threshold": self.ear_threshold,
            "ear_min_consecutive": self.ear_min_consecutive,
            "nod_window_s": self.nod_window_s,
            "nod_min_displacement": self.nod_min_displacement,
            "nod_min_direction_changes": self.nod_min_direction_changes,
        }


def _tokens(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def derive_utterance_attributes(utterances: IntervalTrack, cfg: DerivationConfig) -> IntervalTrack:
    """Enrich each utterance payload with per-turn statistics.

    char_count excludes whitespace so speech_speed stays invariant to
    tokenization; interval_before_s is the gap to the same speaker's previous
    utterance and stays unset for the first one.
    """
    fillers = set(cfg.filler_words)
    backchannels = set(cfg.backchannel_words)
    markers = set(cfg.question_markers)
    out: list[Interval] = []
    prev_end: float | None = None
    for iv in utterances.intervals:
        text = str(iv.payload.get("text", ""))
        tokens = _tokens(text)
        char_count = sum(1 for c in text if not c.isspace())
        length = iv.end - iv.start
        payload = dict(iv.payload)
        payload["char_count"] = char_count
        payload["speech_length_s"] = length
        payload["speech_speed"] = char_count / length
        if prev_end is not None:
            payload["interval_before_s"] = iv.start - prev_end
        payload["filler_count"] = sum(1 for tok in tokens if tok in fillers)
        payload["backchannel_count"] = sum(1 for tok in tokens if tok in backchannels)
        payload["is_question"] = text.rstrip().endswith("?") or any(tok in markers for tok in tokens)
        out.append(Interval(start=iv.start, end=iv.end, payload=payload))
        prev_end = iv.end
    return IntervalTrack(intervals=tuple(out))


def annotate_overlap_flags(utterances: dict[str, IntervalTrack]) -> dict[str, IntervalTrack]:
    """Set the boolean ``overlap`` payload on every utterance."""
    out: dict[str, IntervalTrack] = {}
    for person, track in utterances.items():
        others = [
            iv for p, t in utterances.items() if p != person for iv in t.intervals
        ]
        enriched = []
        for iv in track.intervals:
            hit = any(iv.start < o.end and o.start < iv.end for o in others)
            payload = dict(iv.payload)
            payload["overlap"] = hit
            enriched.append(Interval(start=iv.start, end=iv.end, payload=payload))
        out[person] = IntervalTrack(intervals=tuple(enriched))
    return out


def derive_overlap(utterances: dict[str, IntervalTrack]) -> dict[str, IntervalTrack]:
    """Per person: time ranges where their speech intersects anyone else's.

    Output intervals are the pairwise intersections, merged so the track stays
    non-overlapping when several partners overlap the same utterance.
    """
    out: dict[str, IntervalTrack] = {}
    for person, track in utterances.items():
        pieces: list[tuple[float, float]] = []
        others = [iv for p, t in utterances.items() if p != person for iv in t.intervals]
        for iv in track.intervals:
            for other in others:
                start = max(iv.start, other.start)
                end = min(iv.end, other.end)
                if start < end:
                    pieces.append((start, end))
        merged = merge_intervals(pieces)
        out[person] = IntervalTrack(intervals=tuple(Interval(start=s, end=e) for s, e in merged))
    return out


def derive_blinks(ear: NumericTrack, cfg: DerivationConfig) -> EventTrack:
    """One blink per maximal run of sub-threshold eye-aspect-ratio samples.

    The run must span at least ``ear_min_consecutive`` samples; its extent
    ends where the signal recovers (or one spacing past the last sample).
    """
    ts, values = ear.ts, ear.values
    events: list[Event] = []
    i, n = 0, len(ts)
    while i < n:
        if values[i] >= cfg.ear_threshold:
            i += 1
            continue
        j = i
        while j + 1 < n and values[j + 1] < cfg.ear_threshold:
            j += 1
        if j - i + 1 >= cfg.ear_min_consecutive:
            if j + 1 < n:
                end = ts[j + 1]
            else:
                end = ts[j] + (ts[j] - ts[j - 1] if j > 0 else 0.0)
            events.append(Event(t=ts[i], dur=end - ts[i]))
        i = j + 1
    return EventTrack(events=tuple(events))


def _direction_changes(values: list[float]) -> int:
    changes = 0
    last_sign = 0
    for a, b in zip(values, values[1:]):
        d = b - a
        if d == 0:
            continue
        sign = 1 if d > 0 else -1
        if last_sign and sign != last_sign:
            changes += 1
        last_sign = sign
    return changes


def derive_nods(head_y: NumericTrack, cfg: DerivationConfig) -> EventTrack:
    """Detect nods as rapid vertical oscillation within a sliding window.

    A window qualifies when peak-to-peak displacement reaches
    ``nod_min_displacement`` and the signed velocity flips direction at least
    ``nod_min_direction_changes`` times; overlapping detections merge into one
    event spanning their union.
    """
    ts, values = head_y.ts, head_y.values
    w = cfg.nod_window_s
    n = len(ts)
    detections: list[tuple[float, float]] = []
    hi = 0
    for i in range(n):
        if hi < i + 1:
            hi = i + 1
        while hi < n and ts[hi] <= ts[i] + w:
            hi += 1
        window = list(values[i:hi])
        if len(window) < 2:
            continue
        if max(window) - min(window) < cfg.nod_min_displacement:
            continue
        if _direction_changes(window) >= cfg.nod_min_direction_changes:
            detections.append((ts[i], ts[i] + w))
    merged = merge_intervals(detections)
    return EventTrack(events=tuple(Event(t=s, dur=e - s) for s, e in merged))


def derive_volume(amplitude: NumericTrack, cfg: DerivationConfig) -> NumericTrack:
    """Trailing moving average of amplitude over ``volume_window_s``.

    Emitted at the input sample times; the window is ``(t - w, t]`` so a
    window shorter than the sample spacing reduces to the identity.
    """
    ts, values = amplitude.ts, amplitude.values
    w = cfg.volume_window_s
    out: list[float] = []
    lo = 0
    for i, t in enumerate(ts):
        while ts[lo] <= t - w:
            lo += 1
        out.append(math.fsum(values[lo:i + 1]) / (i - lo + 1))
    return NumericTrack(ts=ts, values=tuple(out), unit=amplitude.unit)
