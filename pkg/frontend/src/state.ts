/**
 * Per-tab result state. Reported segments are hidden in this view only;
 * a fresh evaluation of the same query brings them back (the server log
 * never feeds back into evaluation).
 */

import { EvaluateResponse, SegmentJson } from "./api.js";
import { segmentKey } from "./views.js";

export class ResultState {
  result: EvaluateResponse | null = null;
  provenance = "";
  private hidden = new Set<string>();

  setResult(result: EvaluateResponse, provenance: string): void {
    this.result = result;
    this.provenance = provenance;
    this.hidden = new Set();
  }

  hiddenKeys(): ReadonlySet<string> {
    return this.hidden;
  }

  visibleSegments(): SegmentJson[] {
    if (!this.result) return [];
    return this.result.segments.filter((s) => !this.hidden.has(segmentKey(s)));
  }

  /** Called after POST /reports succeeds; idempotent per segment. */
  markReported(segment: SegmentJson): void {
    this.hidden.add(segmentKey(segment));
  }
}
