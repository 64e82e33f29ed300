/**
 * View models: pure functions from service responses to what the panels
 * render. Every number shown to the user originates from a response
 * object; nothing here re-derives segments, counts, or durations.
 */

import { EvaluateResponse, SessionMetadata, SegmentJson, SweepResponse } from "./api.js";

export function segmentKey(segment: SegmentJson): string {
  return `${segment.start_s}:${segment.end_s}`;
}

export interface SegmentRow {
  key: string;
  segment: SegmentJson;
  label: string;
  durationLabel: string;
  excerpt: string;
}

function formatSeconds(t: number): string {
  return `${t.toFixed(2)} s`;
}

/** Transcript text of utterances overlapping the segment, all speakers. */
export function transcriptExcerpt(session: SessionMetadata, segment: SegmentJson): string {
  const pieces: Array<{ start: number; text: string }> = [];
  for (const track of session.tracks ?? []) {
    if (track.feature !== "utterance" || !track.data) continue;
    for (const iv of track.data) {
      const start = iv.start_s as number;
      const end = iv.end_s as number;
      if (start < segment.end_s && segment.start_s < end) {
        pieces.push({ start, text: `${track.person}: ${String(iv.text ?? "")}` });
      }
    }
  }
  pieces.sort((a, b) => a.start - b.start);
  return pieces.map((p) => p.text).join("  ");
}

export function segmentRows(
  result: EvaluateResponse,
  session: SessionMetadata,
  hiddenKeys: ReadonlySet<string>,
): SegmentRow[] {
  return result.segments
    .filter((s) => !hiddenKeys.has(segmentKey(s)))
    .map((s) => ({
      key: segmentKey(s),
      segment: s,
      label: `[${formatSeconds(s.start_s)} – ${formatSeconds(s.end_s)})`,
      durationLabel: formatSeconds(s.end_s - s.start_s),
      excerpt: transcriptExcerpt(session, s),
    }));
}

// -- inspection timeline ------------------------------------------------------

export interface TraceSpan {
  startFrac: number;
  endFrac: number;
  active: boolean;
}

export interface TraceRow {
  nodePath: string;
  spans: TraceSpan[];
}

export interface TimelineWindow {
  t0: number;
  t1: number;
}

/** Map a time to the shared horizontal fraction of the current window. */
export function axisFraction(window: TimelineWindow, t: number): number {
  return (t - window.t0) / (window.t1 - window.t0);
}

/**
 * One row per AST node, all sharing the same window so the rows stay
 * aligned under zoom. RLE runs are decoded against the sampling period.
 */
export function traceRows(result: EvaluateResponse, window: TimelineWindow): TraceRow[] {
  const dt = result.config.sampling_period_s;
  const rows: TraceRow[] = [];
  for (const nodePath of Object.keys(result.traces).sort()) {
    const spans: TraceSpan[] = [];
    let k = 0;
    for (const [value, count] of result.traces[nodePath]) {
      const start = k * dt;
      const end = (k + count) * dt;
      k += count;
      if (end <= window.t0 || start >= window.t1) continue;
      spans.push({
        startFrac: Math.max(0, axisFraction(window, start)),
        endFrac: Math.min(1, axisFraction(window, end)),
        active: value === 1,
      });
    }
    rows.push({ nodePath, spans });
  }
  return rows;
}

export function zoomWindow(window: TimelineWindow, factor: number, centerT: number): TimelineWindow {
  const width = (window.t1 - window.t0) / factor;
  const t0 = Math.max(0, centerT - width / 2);
  return { t0, t1: t0 + width };
}

// -- sensitivity chart --------------------------------------------------------

export interface SweepPoint {
  value: number;
  segmentCount: number;
  totalDurationS: number;
}

export interface SweepChartModel {
  parameterPath: string;
  points: SweepPoint[];
  maxCount: number;
  maxDuration: number;
}

export function sweepChartModel(sweep: SweepResponse): SweepChartModel {
  const points = sweep.values.map((value, i) => ({
    value,
    segmentCount: sweep.segment_counts[i],
    totalDurationS: sweep.total_durations_s[i],
  }));
  return {
    parameterPath: sweep.parameter_path,
    points,
    maxCount: Math.max(0, ...sweep.segment_counts),
    maxDuration: Math.max(0, ...sweep.total_durations_s),
  };
}

/** Client-side gate mirroring the service contract. */
export function sweepRequestValid(lo: number, hi: number, steps: number): boolean {
  return Number.isFinite(lo) && Number.isFinite(hi) && lo < hi && Number.isInteger(steps) && steps >= 2;
}

/** Feature palette for the canvas, from session metadata only. */
export interface PaletteEntry {
  feature: string;
  kind: string;
  description: string;
  persons: string[];
}

export function featurePalette(session: SessionMetadata): PaletteEntry[] {
  const kinds = new Map<string, string>();
  for (const track of session.tracks ?? []) {
    kinds.set(track.feature, track.kind);
  }
  const persons = (feature: string) =>
    session.persons.filter((p) => (session.features[p] ?? []).includes(feature));
  const names = new Set<string>();
  for (const p of session.persons) {
    for (const f of session.features[p] ?? []) names.add(f);
  }
  return [...names].sort().map((feature) => ({
    feature,
    kind: kinds.get(feature) ?? "unknown",
    description: session.feature_descriptions[feature] ?? "",
    persons: persons(feature),
  }));
}
