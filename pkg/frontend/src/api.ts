/**
 * Typed client for the scene-search HTTP API. The fetch function is
 * injected so tests drive the client against recorded fixtures; the UI
 * never computes a segment or sweep number itself.
 */

export interface SegmentJson {
  start_s: number;
  end_s: number;
}

export interface EvaluateResponse {
  schema_version: string;
  session_id: string;
  person: string;
  query_canonical: string;
  config: { sampling_period_s: number; merge_gap_s: number; min_segment_s: number };
  segments: SegmentJson[];
  traces: Record<string, Array<[number, number]>>;
}

export interface SweepResponse {
  schema_version: string;
  parameter_path: string;
  values: number[];
  segment_counts: number[];
  total_durations_s: number[];
}

export interface TrackDescriptor {
  person: string;
  feature: string;
  kind: "numeric" | "interval" | "event";
  unit?: string;
  data?: Array<Record<string, unknown>>;
}

export interface SessionMetadata {
  session_id: string;
  duration_s: number;
  persons: string[];
  sampling_period_s: number;
  features: Record<string, string[]>;
  feature_descriptions: Record<string, string>;
  tracks?: TrackDescriptor[];
}

export interface RepositoryEntryJson {
  entry_id: string;
  org_id: string;
  title: string;
  description: string;
  canonical: string;
  used_features: string[];
  author: string;
  created_at: string;
  forked_from: string | null;
  document: unknown;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
    public detail?: unknown,
  ) {
    super(message);
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

const PROVENANCE_HEADER = "X-Provenance-Token";

export class ApiClient {
  constructor(private baseUrl: string, private fetchFn: FetchLike = fetch) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const res = await this.fetchFn(this.baseUrl + path, init);
    if (!res.ok) {
      let code = `http_${res.status}`;
      let message = res.statusText;
      let detail: unknown;
      try {
        const body = (await res.json()) as { code?: string; message?: string; detail?: unknown };
        code = body.code ?? code;
        message = body.message ?? message;
        detail = body.detail;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(res.status, code, message, detail);
    }
    return res;
  }

  private post(path: string, body: unknown): Promise<Response> {
    return this.request(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  async listSessions(): Promise<SessionMetadata[]> {
    return (await this.request("/sessions")).json();
  }

  async getSession(id: string, includeTracks = false): Promise<SessionMetadata> {
    const suffix = includeTracks ? "?include=tracks" : "";
    return (await this.request(`/sessions/${encodeURIComponent(id)}${suffix}`)).json();
  }

  async evaluate(
    sessionId: string,
    document: unknown,
    person: string,
    config?: Record<string, number>,
  ): Promise<{ result: EvaluateResponse; provenance: string }> {
    const res = await this.post(`/sessions/${encodeURIComponent(sessionId)}/evaluate`, {
      document,
      person,
      ...(config ? { config } : {}),
    });
    return {
      result: (await res.json()) as EvaluateResponse,
      provenance: res.headers.get(PROVENANCE_HEADER) ?? "",
    };
  }

  async sweep(
    sessionId: string,
    document: unknown,
    person: string,
    parameterPath: string,
    lo: number,
    hi: number,
    steps: number,
  ): Promise<SweepResponse> {
    const res = await this.post(`/sessions/${encodeURIComponent(sessionId)}/sweep`, {
      document,
      person,
      parameter_path: parameterPath,
      lo,
      hi,
      steps,
    });
    return res.json();
  }

  async report(provenance: string, segment: SegmentJson, note = ""): Promise<string> {
    const res = await this.post("/reports", { provenance, segment, note });
    const body = (await res.json()) as { record_id: string };
    return body.record_id;
  }

  async searchQueries(org: string, text?: string, features?: string[]): Promise<RepositoryEntryJson[]> {
    const params = new URLSearchParams();
    if (text) params.set("text", text);
    if (features && features.length > 0) params.set("features", features.join(","));
    const qs = params.toString();
    const res = await this.request(`/orgs/${encodeURIComponent(org)}/queries${qs ? "?" + qs : ""}`);
    return res.json();
  }

  /** Resolves to the new entry id, or throws ApiError with code "duplicate_query". */
  async contribute(
    org: string,
    entry: { title: string; description: string; document: unknown; author: string },
  ): Promise<string> {
    const res = await this.post(`/orgs/${encodeURIComponent(org)}/queries`, entry);
    const body = (await res.json()) as { entry_id: string };
    return body.entry_id;
  }

  async fork(org: string, entryId: string, author: string): Promise<RepositoryEntryJson> {
    const res = await this.post(
      `/orgs/${encodeURIComponent(org)}/queries/${encodeURIComponent(entryId)}/fork`,
      { author },
    );
    return res.json();
  }
}
