import math

import pytest

from scenequery.derive import (
    DerivationConfig,
    annotate_overlap_flags,
    derive_blinks,
    derive_nods,
    derive_overlap,
    derive_utterance_attributes,
    derive_volume,
)
from scenequery.store import Interval, IntervalTrack, NumericTrack

CFG = DerivationConfig(filler_words=("um", "uh"), question_markers=("why", "how"))


def utt(start, end, text, speaker="A"):
    return Interval(start=start, end=end, payload={"text": text, "speaker": speaker})


class TestUtteranceAttributes:
    def test_counts_and_speed(self):
        track = IntervalTrack(intervals=(utt(1.0, 4.0, "um well yes um"),))
        iv = derive_utterance_attributes(track, CFG).intervals[0]
        assert iv.payload["char_count"] == 11
        assert iv.payload["speech_length_s"] == 3.0
        assert iv.payload["speech_speed"] == pytest.approx(11 / 3)
        assert iv.payload["filler_count"] == 2

    def test_interval_before_same_speaker(self):
        track = IntervalTrack(intervals=(utt(1.0, 4.0, "a"), utt(6.0, 8.0, "b")))
        out = derive_utterance_attributes(track, CFG).intervals
        assert "interval_before_s" not in out[0].payload
        assert out[1].payload["interval_before_s"] == 2.0

    def test_question_heuristic(self):
        track = IntervalTrack(intervals=(
            utt(0.0, 1.0, "fine"),
            utt(2.0, 3.0, "are you sure?"),
            utt(4.0, 5.0, "tell me why that happened"),
        ))
        out = derive_utterance_attributes(track, CFG).intervals
        assert [iv.payload["is_question"] for iv in out] == [False, True, True]

    def test_speed_length_product_equals_char_count(self):
        # exact identity in real arithmetic; IEEE rounding allows 1-ulp drift
        track = IntervalTrack(intervals=(utt(0.5, 2.9, "one két three"),))
        iv = derive_utterance_attributes(track, CFG).intervals[0]
        product = iv.payload["speech_speed"] * iv.payload["speech_length_s"]
        assert math.isclose(product, iv.payload["char_count"], rel_tol=1e-12)

    def test_token_matching_ignores_punctuation_and_case(self):
        track = IntervalTrack(intervals=(utt(0.0, 1.0, "Um, UH! umbrella"),))
        iv = derive_utterance_attributes(track, CFG).intervals[0]
        assert iv.payload["filler_count"] == 2  # 'umbrella' is not a token match

    def test_backchannel_hyphenated_token(self):
        cfg = DerivationConfig(backchannel_words=("uh-huh",), filler_words=("uh",))
        track = IntervalTrack(intervals=(utt(0.0, 1.0, "uh-huh sure"),))
        iv = derive_utterance_attributes(track, cfg).intervals[0]
        assert iv.payload["backchannel_count"] == 1
        assert iv.payload["filler_count"] == 0  # 'uh-huh' stays one token


class TestOverlap:
    def test_simple_intersection(self):
        tracks = {
            "A": IntervalTrack(intervals=(utt(1.0, 4.0, "a"),)),
            "B": IntervalTrack(intervals=(utt(3.0, 5.0, "b", "B"),)),
        }
        out = derive_overlap(tracks)
        assert [(iv.start, iv.end) for iv in out["A"].intervals] == [(3.0, 4.0)]
        assert [(iv.start, iv.end) for iv in out["B"].intervals] == [(3.0, 4.0)]

    def test_disjoint(self):
        tracks = {
            "A": IntervalTrack(intervals=(utt(1.0, 2.0, "a"),)),
            "B": IntervalTrack(intervals=(utt(3.0, 4.0, "b", "B"),)),
        }
        out = derive_overlap(tracks)
        assert out["A"].intervals == () and out["B"].intervals == ()

    def test_nested(self):
        tracks = {
            "A": IntervalTrack(intervals=(utt(1.0, 4.0, "a"),)),
            "B": IntervalTrack(intervals=(utt(2.0, 3.0, "b", "B"),)),
        }
        out = derive_overlap(tracks)
        assert [(iv.start, iv.end) for iv in out["A"].intervals] == [(2.0, 3.0)]
        assert [(iv.start, iv.end) for iv in out["B"].intervals] == [(2.0, 3.0)]

    def test_single_person_empty(self):
        out = derive_overlap({"A": IntervalTrack(intervals=(utt(0.0, 1.0, "a"),))})
        assert out["A"].intervals == ()

    def test_symmetric_as_point_sets(self):
        tracks = {
            "A": IntervalTrack(intervals=(utt(0.0, 2.0, "a"), utt(3.0, 6.0, "b"))),
            "B": IntervalTrack(intervals=(utt(1.0, 4.0, "c", "B"), utt(5.0, 7.0, "d", "B"))),
        }
        out = derive_overlap(tracks)
        points_a = [(iv.start, iv.end) for iv in out["A"].intervals]
        points_b = [(iv.start, iv.end) for iv in out["B"].intervals]
        assert points_a == points_b == [(1.0, 2.0), (3.0, 4.0), (5.0, 6.0)]

    def test_overlap_flag_on_utterances(self):
        tracks = {
            "A": IntervalTrack(intervals=(utt(1.0, 4.0, "a"), utt(6.0, 7.0, "x"))),
            "B": IntervalTrack(intervals=(utt(3.0, 5.0, "b", "B"),)),
        }
        flagged = annotate_overlap_flags(tracks)
        assert [iv.payload["overlap"] for iv in flagged["A"].intervals] == [True, False]
        assert [iv.payload["overlap"] for iv in flagged["B"].intervals] == [True]


class TestBlinks:
    def test_run_detected(self):
        ear = NumericTrack(ts=(0.0, 0.1, 0.2, 0.3, 0.4), values=(0.3, 0.3, 0.15, 0.12, 0.3))
        events = derive_blinks(ear, CFG).events
        assert len(events) == 1
        assert events[0].t == pytest.approx(0.2)
        assert events[0].dur == pytest.approx(0.2)

    def test_no_events_above_threshold(self):
        ear = NumericTrack(ts=(0.0, 0.1, 0.2), values=(0.3, 0.25, 0.4))
        assert derive_blinks(ear, CFG).events == ()

    def test_single_sample_run_too_short(self):
        ear = NumericTrack(ts=(0.0, 0.1, 0.2), values=(0.3, 0.1, 0.3))
        assert derive_blinks(ear, CFG).events == ()

    def test_run_at_track_end(self):
        ear = NumericTrack(ts=(0.0, 0.1, 0.2, 0.3), values=(0.3, 0.3, 0.1, 0.1))
        events = derive_blinks(ear, CFG).events
        assert len(events) == 1
        assert events[0].t == pytest.approx(0.2)
        assert events[0].dur == pytest.approx(0.2)


class TestNods:
    def test_oscillation_detected(self):
        ts = (0.0, 0.25, 0.5, 0.75)
        head = NumericTrack(ts=ts, values=(0.0, 0.05, 0.0, 0.05))
        events = derive_nods(head, CFG).events
        assert len(events) == 1
        assert events[0].t == 0.0

    def test_monotone_drift_not_a_nod(self):
        head = NumericTrack(ts=(0.0, 0.3, 0.6, 0.9), values=(0.0, 0.03, 0.07, 0.1))
        assert derive_nods(head, CFG).events == ()

    def test_flat_signal_not_a_nod(self):
        head = NumericTrack(ts=(0.0, 0.3, 0.6, 0.9), values=(0.02,) * 4)
        assert derive_nods(head, CFG).events == ()

    def test_small_oscillation_below_displacement(self):
        head = NumericTrack(ts=(0.0, 0.25, 0.5, 0.75), values=(0.0, 0.01, 0.0, 0.01))
        assert derive_nods(head, CFG).events == ()

    def test_overlapping_windows_merge(self):
        # oscillation spanning 2 s triggers window starts 0.0 .. 1.4; their
        # union is one event [0.0, 2.4)
        ts = tuple(i * 0.2 for i in range(11))
        values = tuple(0.05 * (i % 2) for i in range(11))
        events = derive_nods(NumericTrack(ts=ts, values=values), CFG).events
        assert len(events) == 1
        assert events[0].t == 0.0
        assert events[0].dur == pytest.approx(2.4)


class TestVolume:
    def test_constant_input_identity(self):
        amp = NumericTrack(ts=tuple(i * 0.1 for i in range(10)), values=(0.5,) * 10)
        out = derive_volume(amp, CFG)
        assert out.ts == amp.ts
        assert all(v == pytest.approx(0.5) for v in out.values)

    def test_impulse_averaged_over_window(self):
        ts = tuple(i * 0.1 for i in range(11))
        values = tuple(1.0 if i == 5 else 0.0 for i in range(11))
        out = derive_volume(NumericTrack(ts=ts, values=values), CFG)  # window 0.5 -> 5 samples
        assert out.values[5] == pytest.approx(0.2)
        assert out.values[9] == pytest.approx(0.2)
        assert out.values[10] == pytest.approx(0.0)

    def test_window_shorter_than_spacing_is_identity(self):
        cfg = DerivationConfig(volume_window_s=0.05)
        amp = NumericTrack(ts=(0.0, 0.1, 0.2), values=(0.1, 0.9, 0.4))
        assert derive_volume(amp, cfg).values == amp.values


class TestConfig:
    def test_defaults_load_from_data_files(self):
        cfg = DerivationConfig()
        assert "um" in cfg.filler_words
        assert "uh-huh" in cfg.backchannel_words
        assert cfg.volume_window_s == 0.5
        assert cfg.ear_threshold == 0.2
        assert cfg.nod_window_s == 1.0

    def test_rejects_bad_window(self):
        with pytest.raises(ValueError):
            DerivationConfig(volume_window_s=0.0)

    def test_rejects_uppercase_words(self):
        with pytest.raises(ValueError):
            DerivationConfig(filler_words=("Um",))

    def test_from_file_missing_uses_defaults(self, tmp_path):
        cfg = DerivationConfig.from_file(tmp_path / "derivation.json")
        assert cfg == DerivationConfig()

    def test_determinism(self):
        track = IntervalTrack(intervals=(utt(1.0, 4.0, "um well yes um"),))
        a = derive_utterance_attributes(track, CFG)
        b = derive_utterance_attributes(track, CFG)
        assert a == b
