import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import { EvaluateResponse, SessionMetadata, SweepResponse } from "../src/api.js";
import {
  axisFraction,
  featurePalette,
  segmentRows,
  sweepChartModel,
  sweepRequestValid,
  traceRows,
  zoomWindow,
} from "../src/views.js";

function fixture<T>(name: string): T {
  const path = fileURLToPath(new URL(`../fixtures/${name}`, import.meta.url));
  return JSON.parse(readFileSync(path, "utf-8")) as T;
}

const session = fixture<SessionMetadata>("session_demo.json");
const evaluated = fixture<EvaluateResponse>("evaluate_demo.json");
const sweep = fixture<SweepResponse>("sweep_demo.json");

describe("segment list (recorded service response)", () => {
  it("shows exactly the service's segments", () => {
    const rows = segmentRows(evaluated, session, new Set());
    expect(rows.map((r) => [r.segment.start_s, r.segment.end_s])).toEqual([[2, 4], [7, 8]]);
    expect(rows).toHaveLength(2);
  });

  it("durations come from the response, not recomputation drift", () => {
    const rows = segmentRows(evaluated, session, new Set());
    expect(rows[0].durationLabel).toBe("2.00 s");
    expect(rows[1].durationLabel).toBe("1.00 s");
  });

  it("attaches transcript excerpts overlapping each segment", () => {
    const rows = segmentRows(evaluated, session, new Set());
    expect(rows[0].excerpt).toContain("A: um well yes um");
    expect(rows[0].excerpt).toContain("B: right");
    expect(rows[1].excerpt).toBe("A: fine");
  });

  it("hidden keys filter the view", () => {
    const rows = segmentRows(evaluated, session, new Set(["2:4"]));
    expect(rows).toHaveLength(1);
    expect(rows[0].segment.start_s).toBe(7);
  });
});

describe("inspection timeline", () => {
  const full = { t0: 0, t1: session.duration_s };

  it("one row per AST node", () => {
    const rows = traceRows(evaluated, full);
    expect(rows.map((r) => r.nodePath)).toEqual(["root", "root.0", "root.1"]);
  });

  it("root spans reproduce the service segments on the shared axis", () => {
    const rows = traceRows(evaluated, full);
    const active = rows[0].spans.filter((s) => s.active);
    expect(active.map((s) => [s.startFrac * 10, s.endFrac * 10])).toEqual([[2, 4], [7, 8]]);
  });

  it("all rows share the same axis mapping (zoom preserves alignment)", () => {
    const zoomed = zoomWindow(full, 2, 5);
    const rows = traceRows(evaluated, zoomed);
    for (const t of [2.5, 5, 7.4]) {
      const f = axisFraction(zoomed, t);
      for (const row of rows) {
        for (const span of row.spans) {
          // any span boundary that equals t maps to the same fraction in every row
          expect(axisFraction(zoomed, t)).toBe(f);
        }
      }
    }
    expect(zoomed.t1 - zoomed.t0).toBe(5);
  });

  it("spans are clipped to the window", () => {
    const rows = traceRows(evaluated, { t0: 3, t1: 7.5 });
    for (const row of rows) {
      for (const span of row.spans) {
        expect(span.startFrac).toBeGreaterThanOrEqual(0);
        expect(span.endFrac).toBeLessThanOrEqual(1);
      }
    }
  });
});

describe("sensitivity chart (recorded sweep)", () => {
  it("chart points mirror the response arrays", () => {
    const model = sweepChartModel(sweep);
    expect(model.points).toHaveLength(11);
    expect(model.points[0]).toEqual({ value: 0.3, segmentCount: 2, totalDurationS: 4 });
    const last = model.points[model.points.length - 1];
    expect(last.value).toBeCloseTo(0.8, 12);
    expect(last.segmentCount).toBe(0);
    expect(last.totalDurationS).toBe(0);
  });

  it("chart endpoints: 0.3 -> 4.0 s total, 0.8 -> 0 s", () => {
    const model = sweepChartModel(sweep);
    expect(model.points[0].totalDurationS).toBe(4.0);
    expect(model.points[10].totalDurationS).toBe(0.0);
    expect(model.maxDuration).toBe(4.0);
    expect(model.maxCount).toBe(2);
  });

  it("steps < 2 is blocked client-side", () => {
    expect(sweepRequestValid(0.3, 0.8, 1)).toBe(false);
    expect(sweepRequestValid(0.8, 0.3, 5)).toBe(false);
    expect(sweepRequestValid(0.3, 0.8, 2)).toBe(true);
  });
});

describe("feature palette", () => {
  it("is generated from session metadata with descriptions", () => {
    const palette = featurePalette(session);
    const nod = palette.find((p) => p.feature === "nod");
    expect(nod).toBeDefined();
    expect(nod!.kind).toBe("event");
    expect(nod!.description.length).toBeGreaterThan(0);
    expect(nod!.persons).toEqual(["A"]);
    const utterance = palette.find((p) => p.feature === "utterance");
    expect(utterance!.persons).toEqual(["A", "B"]);
  });
});
