/**
 * Browser entry: wires the diagram editor, result/inspection/sensitivity
 * panels, and the repository browser to the HTTP API. All logic lives in
 * the imported modules; this file is DOM plumbing.
 */

import { ApiClient, ApiError, SessionMetadata, EvaluateResponse } from "./api.js";
import {
  Block,
  Diagram,
  FeatureBlock,
  buildDocument,
  canSubmit,
  childrenOf,
  emptyDiagram,
  freshBlockId,
  importDocument,
  validateDiagram,
} from "./diagram.js";
import { Predicate, sweepableParameters } from "./document.js";
import { ResultState } from "./state.js";
import {
  featurePalette,
  segmentRows,
  sweepChartModel,
  sweepRequestValid,
  traceRows,
  zoomWindow,
  TimelineWindow,
} from "./views.js";

const api = new ApiClient(localStorage.getItem("scenequery.base") ?? "http://127.0.0.1:8000");
const org = localStorage.getItem("scenequery.org") ?? "default";

let session: SessionMetadata | null = null;
let diagram: Diagram = emptyDiagram();
const resultState = new ResultState();
let timeline: TimelineWindow = { t0: 0, t1: 1 };

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: Array<Node | string>
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  node.append(...children);
  return node;
}

function byId(id: string): HTMLElement {
  return document.getElementById(id)!;
}

function defaultPredicate(kind: string): Predicate {
  if (kind === "numeric") return { op: "gt", threshold: 0.5 };
  if (kind === "event") return { op: "count_at_least", n: 1, window_s: 2 };
  return { op: "is_active" };
}

// -- canvas -------------------------------------------------------------------

function renderPalette(): void {
  const host = byId("palette");
  host.replaceChildren();
  if (!session) return;
  for (const entry of featurePalette(session)) {
    const button = el("button", { class: "palette-item", title: entry.description },
      `${entry.feature} (${entry.kind})`);
    button.onclick = () => {
      diagram.blocks.push({
        id: freshBlockId(),
        type: "feature",
        feature: entry.feature,
        predicate: defaultPredicate(entry.kind),
      } as FeatureBlock);
      renderCanvas();
    };
    host.append(button);
  }
  for (const op of ["and", "or", "not"] as const) {
    const button = el("button", { class: "palette-item logic" }, op.toUpperCase());
    button.onclick = () => {
      diagram.blocks.push({ id: freshBlockId(), type: op });
      renderCanvas();
    };
    host.append(button);
  }
}

function predicateEditor(block: FeatureBlock): HTMLElement {
  const host = el("span", { class: "predicate" });
  const pred = block.predicate;
  const num = (value: number, onchange: (v: number) => void) => {
    const input = el("input", { type: "number", step: "any", value: String(value) });
    input.onchange = () => {
      onchange(Number(input.value));
      renderCanvas();
    };
    return input;
  };
  if (pred.op === "gt" || pred.op === "lt") {
    const select = el("select", {},
      el("option", { value: "gt" }, "greater than"),
      el("option", { value: "lt" }, "less than"));
    (select as HTMLSelectElement).value = pred.op;
    select.onchange = () => {
      pred.op = (select as HTMLSelectElement).value as "gt" | "lt";
      renderCanvas();
    };
    host.append(select, num(pred.threshold ?? 0, (v) => (pred.threshold = v)));
  } else if (pred.op === "count_at_least") {
    host.append(
      "at least ", num(pred.n ?? 1, (v) => (pred.n = Math.max(1, Math.round(v)))),
      " in ", num(pred.window_s ?? 1, (v) => (pred.window_s = v)), " s");
  } else if (pred.op === "text_contains") {
    const input = el("input", { type: "text", value: pred.pattern ?? "" });
    input.onchange = () => {
      pred.pattern = (input as HTMLInputElement).value;
      renderCanvas();
    };
    host.append("contains ", input);
  } else if (pred.op === "equals") {
    const input = el("input", { type: "text", value: pred.label ?? "" });
    input.onchange = () => {
      pred.label = (input as HTMLInputElement).value;
      renderCanvas();
    };
    host.append("equals ", input);
  } else {
    host.append("is active");
  }
  return host;
}

function connectionEditor(block: Block): HTMLElement {
  const select = el("select", { class: "parent" }, el("option", { value: "" }, "(output)"));
  for (const candidate of diagram.blocks) {
    if (candidate.id === block.id || candidate.type === "feature") continue;
    const opt = el("option", { value: candidate.id },
      `${candidate.type.toUpperCase()} ${candidate.id}`);
    select.append(opt);
  }
  const current = diagram.connections.find((c) => c.from === block.id);
  (select as HTMLSelectElement).value = current?.to ?? "";
  select.onchange = () => {
    diagram.connections = diagram.connections.filter((c) => c.from !== block.id);
    const to = (select as HTMLSelectElement).value;
    if (to) diagram.connections.push({ from: block.id, to });
    renderCanvas();
  };
  return select;
}

function renderCanvas(): void {
  const host = byId("canvas");
  host.replaceChildren();
  const errors = validateDiagram(diagram);
  const errorsByBlock = new Map<string | null, string[]>();
  for (const e of errors) {
    errorsByBlock.set(e.blockId, [...(errorsByBlock.get(e.blockId) ?? []), e.message]);
  }

  for (const block of diagram.blocks) {
    const row = el("div", { class: "block " + block.type, "data-block": block.id });
    const remove = el("button", { class: "remove" }, "×");
    remove.onclick = () => {
      diagram.blocks = diagram.blocks.filter((b) => b.id !== block.id);
      diagram.connections = diagram.connections.filter(
        (c) => c.from !== block.id && c.to !== block.id);
      renderCanvas();
    };
    if (block.type === "feature") {
      row.append(el("b", {}, block.feature), " ", predicateEditor(block));
    } else {
      row.append(el("b", {}, block.type.toUpperCase()),
        ` inputs: ${childrenOf(diagram, block.id).length}`);
    }
    row.append(" → ", connectionEditor(block), " ", remove);
    for (const message of errorsByBlock.get(block.id) ?? []) {
      row.append(el("span", { class: "error" }, ` ⚠ ${message}`));
    }
    host.append(row);
  }
  for (const message of errorsByBlock.get(null) ?? []) {
    if (diagram.blocks.length > 0) {
      host.append(el("div", { class: "error" }, `⚠ ${message}`));
    }
  }

  (byId("run") as HTMLButtonElement).disabled = !canSubmit(diagram) || !personSelect().value;
  renderSweepParams();
}

function personSelect(): HTMLSelectElement {
  return byId("person") as HTMLSelectElement;
}

// -- results ------------------------------------------------------------------

function renderResults(): void {
  const host = byId("segments");
  host.replaceChildren();
  const result = resultState.result;
  if (!session || !result) return;
  const rows = segmentRows(result, session, resultState.hiddenKeys());
  byId("segment-count").textContent = `${rows.length} segment(s)`;
  for (const row of rows) {
    const report = el("button", { class: "report", title: "log this result as wrong and hide it" }, "report");
    report.onclick = async () => {
      try {
        await api.report(resultState.provenance, row.segment);
        resultState.markReported(row.segment);
        renderResults();
      } catch (err) {
        showError(err);
      }
    };
    host.append(el("div", { class: "segment" },
      el("b", {}, row.label), ` ${row.durationLabel} `, report,
      el("div", { class: "excerpt" }, row.excerpt)));
  }
  renderTraces();
}

function renderTraces(): void {
  const host = byId("traces");
  host.replaceChildren();
  const result = resultState.result;
  if (!result || !session) return;
  for (const row of traceRows(result, timeline)) {
    const lane = el("div", { class: "lane" });
    for (const span of row.spans) {
      if (!span.active) continue;
      const div = el("div", { class: "span" });
      div.style.left = `${span.startFrac * 100}%`;
      div.style.width = `${(span.endFrac - span.startFrac) * 100}%`;
      lane.append(div);
    }
    host.append(el("div", { class: "trace-row" },
      el("span", { class: "path" }, row.nodePath), lane));
  }
}

// -- sensitivity --------------------------------------------------------------

function renderSweepParams(): void {
  const select = byId("sweep-param") as HTMLSelectElement;
  select.replaceChildren();
  const built = buildDocument(diagram);
  if (!built.ok) return;
  for (const param of sweepableParameters(built.root)) {
    select.append(el("option", { value: param.path }, `${param.label} (now ${param.value})`));
  }
}

function renderSweepChart(model: ReturnType<typeof sweepChartModel>): void {
  const host = byId("sweep-chart");
  host.replaceChildren();
  const table = el("table", {},
    el("tr", {}, el("th", {}, model.parameterPath), el("th", {}, "# scenes"), el("th", {}, "total duration")));
  for (const point of model.points) {
    const countBar = el("div", { class: "bar count" });
    countBar.style.width = `${model.maxCount ? (point.segmentCount / model.maxCount) * 100 : 0}%`;
    const durBar = el("div", { class: "bar duration" });
    durBar.style.width = `${model.maxDuration ? (point.totalDurationS / model.maxDuration) * 100 : 0}%`;
    table.append(el("tr", {},
      el("td", {}, point.value.toPrecision(4)),
      el("td", {}, String(point.segmentCount), countBar),
      el("td", {}, `${point.totalDurationS.toFixed(2)} s`, durBar)));
  }
  host.append(table);
}

// -- repository ---------------------------------------------------------------

async function refreshRepo(): Promise<void> {
  const text = (byId("repo-text") as HTMLInputElement).value || undefined;
  const features = (byId("repo-features") as HTMLInputElement).value
    .split(",").map((s) => s.trim()).filter(Boolean);
  try {
    const entries = await api.searchQueries(org, text, features);
    const host = byId("repo-entries");
    host.replaceChildren();
    for (const entry of entries) {
      const forkBtn = el("button", {}, "fork into canvas");
      forkBtn.onclick = async () => {
        const forked = await api.fork(org, entry.entry_id, "ui");
        diagram = importDocument(JSON.stringify(forked.document));
        renderCanvas();
      };
      const download = el("button", {}, "download");
      download.onclick = () => {
        const blob = new Blob([JSON.stringify(entry.document)], { type: "application/json" });
        const a = el("a", { href: URL.createObjectURL(blob), download: `${entry.title}.json` });
        a.click();
      };
      host.append(el("div", { class: "entry" },
        el("b", {}, entry.title), ` by ${entry.author || "unknown"} `,
        el("span", { class: "features" }, entry.used_features.join(", ")),
        el("div", {}, entry.description), forkBtn, " ", download));
    }
  } catch (err) {
    showError(err);
  }
}

function showError(err: unknown): void {
  const host = byId("status");
  if (err instanceof ApiError) {
    host.textContent = `error [${err.code}]: ${err.message}`;
    if (err.code === "duplicate_query") {
      const dup = (err.detail as { duplicate_of?: string })?.duplicate_of;
      host.textContent += ` (duplicate of ${dup})`;
    }
  } else {
    host.textContent = String(err);
  }
}

// -- wiring -------------------------------------------------------------------

async function selectSession(id: string): Promise<void> {
  session = await api.getSession(id, true);
  timeline = { t0: 0, t1: session.duration_s };
  const persons = personSelect();
  persons.replaceChildren(...session.persons.map((p) => el("option", { value: p }, p)));
  renderPalette();
  renderCanvas();
}

async function init(): Promise<void> {
  try {
    const sessions = await api.listSessions();
    const select = byId("session") as HTMLSelectElement;
    select.replaceChildren(...sessions.map((s) =>
      el("option", { value: s.session_id }, `${s.session_id} (${s.duration_s.toFixed(0)} s)`)));
    select.onchange = () => void selectSession(select.value);
    if (sessions.length > 0) await selectSession(sessions[0].session_id);
  } catch (err) {
    showError(err);
  }

  (byId("run") as HTMLButtonElement).onclick = async () => {
    const built = buildDocument(diagram);
    if (!built.ok || !session) return;
    try {
      byId("status").textContent = "evaluating…";
      const { result, provenance } = await api.evaluate(
        session.session_id, JSON.parse(built.document), personSelect().value);
      resultState.setResult(result, provenance);
      timeline = { t0: 0, t1: session.duration_s };
      byId("status").textContent = `query: ${result.query_canonical}`;
      renderResults();
    } catch (err) {
      showError(err);
    }
  };

  byId("zoom-in").onclick = () => {
    const center = (timeline.t0 + timeline.t1) / 2;
    timeline = zoomWindow(timeline, 2, center);
    renderTraces();
  };
  byId("zoom-out").onclick = () => {
    if (!session) return;
    const center = (timeline.t0 + timeline.t1) / 2;
    timeline = zoomWindow(timeline, 0.5, center);
    timeline = { t0: Math.max(0, timeline.t0), t1: Math.min(session.duration_s, timeline.t1) };
    renderTraces();
  };

  (byId("sweep-run") as HTMLButtonElement).onclick = async () => {
    const built = buildDocument(diagram);
    if (!built.ok || !session) return;
    const lo = Number((byId("sweep-lo") as HTMLInputElement).value);
    const hi = Number((byId("sweep-hi") as HTMLInputElement).value);
    const steps = Number((byId("sweep-steps") as HTMLInputElement).value);
    if (!sweepRequestValid(lo, hi, steps)) {
      showError(new Error("sweep needs lo < hi and integer steps >= 2"));
      return;
    }
    const path = (byId("sweep-param") as HTMLSelectElement).value;
    try {
      const sweep = await api.sweep(
        session.session_id, JSON.parse(built.document), personSelect().value, path, lo, hi, steps);
      renderSweepChart(sweepChartModel(sweep));
    } catch (err) {
      showError(err);
    }
  };

  byId("share").onclick = () => {
    const built = buildDocument(diagram);
    if (!built.ok) return;
    void navigator.clipboard.writeText(built.document);
    byId("status").textContent = "query document copied to clipboard";
  };

  (byId("contribute") as HTMLButtonElement).onclick = async () => {
    const built = buildDocument(diagram);
    if (!built.ok) return;
    try {
      const entryId = await api.contribute(org, {
        title: (byId("contrib-title") as HTMLInputElement).value,
        description: (byId("contrib-description") as HTMLInputElement).value,
        document: JSON.parse(built.document),
        author: "ui",
      });
      byId("status").textContent = `stored as ${entryId}`;
      await refreshRepo();
    } catch (err) {
      showError(err);
    }
  };

  byId("repo-search").onclick = () => void refreshRepo();
  await refreshRepo();
}

void init();
