import type {
  AnswerResponse,
  CreateSessionResponse,
  ModelSummary,
  Policy,
  PredictionPayload,
  SessionSummary,
} from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

async function parseJson(response: Response): Promise<unknown> {
  const text = await response.text();
  try {
    return text ? JSON.parse(text) : null;
  } catch {
    throw new ApiError(response.status, "response was not JSON");
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  let response: Response;
  try {
    response = await fetch(url, init);
  } catch (err) {
    throw new ApiError(0, `service unreachable: ${String(err)}`);
  }
  const body = await parseJson(response);
  if (!response.ok) {
    const message =
      body && typeof body === "object" && "error" in body
        ? String((body as { error: unknown }).error)
        : `HTTP ${response.status}`;
    throw new ApiError(response.status, message);
  }
  return body as T;
}

/** Thin typed client over the /api routes. */
export class ApiClient {
  constructor(private baseUrl: string = "") {}

  getModel(): Promise<ModelSummary> {
    return request<ModelSummary>(`${this.baseUrl}/api/model`);
  }

  createSession(policy: Policy): Promise<CreateSessionResponse> {
    return request<CreateSessionResponse>(`${this.baseUrl}/api/sessions`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ policy }),
    });
  }

  submitAnswer(sessionId: string, outcomeId: number, value: number): Promise<AnswerResponse> {
    return request<AnswerResponse>(
      `${this.baseUrl}/api/sessions/${encodeURIComponent(sessionId)}/answers`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ outcome_id: outcomeId, value }),
      },
    );
  }

  getPredictions(sessionId: string): Promise<PredictionPayload[]> {
    return request<PredictionPayload[]>(
      `${this.baseUrl}/api/sessions/${encodeURIComponent(sessionId)}/predictions`,
    );
  }

  getSession(sessionId: string): Promise<SessionSummary> {
    return request<SessionSummary>(
      `${this.baseUrl}/api/sessions/${encodeURIComponent(sessionId)}`,
    );
  }
}
