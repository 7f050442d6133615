/**
 * Service client with latest-wins sequencing: rapid slider drags may
 * resolve out of order, and only the payload of the most recent request is
 * ever surfaced — earlier responses come back marked stale.
 */

import type { ExplainRequest } from "./state.js";

export interface ExplainPayload {
  saliency: string; // base64 FCT
  overlay: string; // base64 PNG
  logits: number[];
  references_used: number[];
  metadata: Record<string, unknown>;
}

export interface RelativeDropPayload {
  rd: number;
  fraction: number;
  target_class: number;
  reference_class: number;
  references_used: number[];
}

export type ApiResult<T> =
  | { kind: "ok"; payload: T }
  | { kind: "stale" }
  | { kind: "error"; status: number; detail: string };

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private explainSeq = 0;
  private rdSeq = 0;

  constructor(private baseUrl: string, private fetchFn: FetchLike = fetch.bind(globalThis)) {}

  async classes(): Promise<string[]> {
    const res = await this.fetchFn(`${this.baseUrl}/api/classes`);
    if (!res.ok) throw new Error(`classes: HTTP ${res.status}`);
    return (await res.json()) as string[];
  }

  async samples(cls?: number | string): Promise<Array<{ sample_id: string; class_id: number; class_name: string; split: string; bbox: number[] | null }>> {
    const query = cls === undefined ? "" : `?class=${encodeURIComponent(String(cls))}`;
    const res = await this.fetchFn(`${this.baseUrl}/api/samples${query}`);
    if (!res.ok) throw new Error(`samples: HTTP ${res.status}`);
    return await res.json();
  }

  imageUrl(sampleId: string): string {
    return `${this.baseUrl}/api/image/${encodeURIComponent(sampleId)}`;
  }

  private async post<T>(path: string, body: unknown, seq: number, current: () => number): Promise<ApiResult<T>> {
    let res: Response;
    try {
      res = await this.fetchFn(`${this.baseUrl}${path}`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(body),
      });
    } catch (err) {
      if (seq !== current()) return { kind: "stale" };
      return { kind: "error", status: 0, detail: String(err) };
    }
    if (seq !== current()) return { kind: "stale" };
    if (!res.ok) {
      let detail = `HTTP ${res.status}`;
      try {
        const doc = await res.json();
        if (doc && typeof doc.detail === "string") detail = doc.detail;
      } catch {
        // keep the status text
      }
      return { kind: "error", status: res.status, detail };
    }
    return { kind: "ok", payload: (await res.json()) as T };
  }

  explain(req: ExplainRequest): Promise<ApiResult<ExplainPayload>> {
    const seq = ++this.explainSeq;
    return this.post("/api/explain", req, seq, () => this.explainSeq);
  }

  relativeDrop(req: ExplainRequest & { fraction: number }): Promise<ApiResult<RelativeDropPayload>> {
    const seq = ++this.rdSeq;
    const { output, ...rest } = req;
    return this.post("/api/relative_drop", rest, seq, () => this.rdSeq);
  }
}
