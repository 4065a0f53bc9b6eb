// Thin typed client over fetch. The fetch function is injected so contract
// tests can stub the service and inspect the exact requests sent.

import type {
  ApplicationsPayload,
  ApiErrorBody,
  FeedbackPayload,
  FeedbackResponse,
  MetricsPayload,
  SessionInfo,
  UndoResponse,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public status: number,
    public body: ApiErrorBody,
  ) {
    super(body.message);
  }
}

async function parse<T>(res: Response): Promise<T> {
  if (!res.ok) {
    let body: ApiErrorBody;
    try {
      body = (await res.json()) as ApiErrorBody;
    } catch {
      body = { code: "http_error", message: res.statusText };
    }
    throw new ApiError(res.status, body);
  }
  return (await res.json()) as T;
}

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  createSession(participantId?: string): Promise<SessionInfo> {
    return this.post<SessionInfo>("/sessions", { participant_id: participantId ?? null });
  }

  getApplications(
    sessionId: string,
    opts: { sort?: string; filters?: string[] } = {},
  ): Promise<ApplicationsPayload> {
    const params = new URLSearchParams();
    if (opts.sort) params.set("sort", opts.sort);
    for (const f of opts.filters ?? []) params.append("filter", f);
    const qs = params.toString();
    return this.get<ApplicationsPayload>(
      `/sessions/${sessionId}/applications${qs ? `?${qs}` : ""}`,
    );
  }

  getMetrics(sessionId: string, attributes?: string[]): Promise<MetricsPayload> {
    const qs = attributes && attributes.length ? `?attributes=${attributes.join(",")}` : "";
    return this.get<MetricsPayload>(`/sessions/${sessionId}/metrics${qs}`);
  }

  // The payload goes over the wire exactly as built by the Decide form: raw
  // slider values, no client-side normalization.
  postFeedback(sessionId: string, payload: FeedbackPayload): Promise<FeedbackResponse> {
    return this.post<FeedbackResponse>(`/sessions/${sessionId}/feedback`, payload);
  }

  postUndo(sessionId: string): Promise<UndoResponse> {
    return this.post<UndoResponse>(`/sessions/${sessionId}/undo`, {});
  }

  private async get<T>(path: string): Promise<T> {
    const res = await this.fetchFn(this.baseUrl + path);
    return parse<T>(res);
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const res = await this.fetchFn(this.baseUrl + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    return parse<T>(res);
  }
}
