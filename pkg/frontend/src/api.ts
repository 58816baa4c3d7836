/** Thin typed client over the dialogue service HTTP API. */

import type {
  AgentsResponse,
  CreateSessionResponse,
  FeedbackBody,
  SessionSummary,
  UtteranceReply,
} from "./types";

export class ApiError extends Error {
  /** HTTP status, or null when the request never reached the server. */
  constructor(public status: number | null, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

async function detailOf(resp: Response): Promise<string> {
  try {
    const body = (await resp.json()) as { detail?: unknown };
    if (typeof body.detail === "string") return body.detail;
    if (body.detail !== undefined) return JSON.stringify(body.detail);
  } catch {
    /* non-JSON error body */
  }
  return `${resp.status} ${resp.statusText}`;
}

export class ApiClient {
  constructor(public base: string = "") {}

  private async call<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    let resp: Response;
    try {
      resp = await fetch(this.base + path, {
        method,
        headers: body !== undefined ? { "Content-Type": "application/json" } : undefined,
        body: body !== undefined ? JSON.stringify(body) : undefined,
      });
    } catch (err) {
      throw new ApiError(null, `service unreachable: ${String(err)}`);
    }
    if (!resp.ok) {
      throw new ApiError(resp.status, await detailOf(resp));
    }
    return (await resp.json()) as T;
  }

  health(): Promise<{ status: string }> {
    return this.call("GET", "/healthz");
  }

  agents(): Promise<AgentsResponse> {
    return this.call("GET", "/agents");
  }

  createSession(
    agent: string,
    evalMode: boolean,
    seed?: number,
  ): Promise<CreateSessionResponse> {
    const body: Record<string, unknown> = { agent, eval_mode: evalMode };
    if (seed !== undefined) body.seed = seed;
    return this.call("POST", "/sessions", body);
  }

  sendUtterance(sessionId: string, text: string): Promise<UtteranceReply> {
    return this.call("POST", `/sessions/${sessionId}/utterance`, { text });
  }

  getSession(sessionId: string): Promise<SessionSummary> {
    return this.call("GET", `/sessions/${sessionId}`);
  }

  sendFeedback(
    sessionId: string,
    feedback: FeedbackBody,
  ): Promise<{ ok: boolean }> {
    return this.call("POST", `/sessions/${sessionId}/feedback`, feedback);
  }
}
