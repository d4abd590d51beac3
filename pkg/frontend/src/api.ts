// Thin typed client for the grounder service. Errors are normalized to
// ApiError carrying the server's {code, message, detail} body when present.

import type {
  ActionResponse,
  CameraPoseDoc,
  GraphDoc,
  NodeDoc,
  UtteranceResponse,
} from "./types.js";

export class ApiError extends Error {
  readonly status: number;
  readonly code: string;

  constructor(status: number, code: string, message: string) {
    super(message);
    this.status = status;
    this.code = code;
  }
}

async function parseError(resp: Response): Promise<ApiError> {
  let code = "http_error";
  let message = `${resp.status} ${resp.statusText}`;
  try {
    const body = (await resp.json()) as { code?: string; message?: string };
    if (body.code) code = body.code;
    if (body.message) message = body.message;
  } catch {
    // non-JSON error body; keep the status line
  }
  return new ApiError(resp.status, code, message);
}

export class GrounderApi {
  constructor(readonly baseUrl: string) {}

  private async post<T>(path: string, body: unknown): Promise<T> {
    const resp = await fetch(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body ?? {}),
    });
    if (!resp.ok) throw await parseError(resp);
    return (await resp.json()) as T;
  }

  private async get<T>(path: string): Promise<T> {
    const resp = await fetch(`${this.baseUrl}${path}`);
    if (!resp.ok) throw await parseError(resp);
    return (await resp.json()) as T;
  }

  createSession(now?: string): Promise<{ session_id: string }> {
    return this.post("/sessions", now ? { now } : {});
  }

  resumeSession(resumeFrom: string, now?: string): Promise<{ session_id: string }> {
    return this.post("/sessions", { resume_from: resumeFrom, ...(now ? { now } : {}) });
  }

  registerScene(
    sessionId: string,
    nodes: NodeDoc[],
    now?: string,
  ): Promise<{ nodes: number; edges: number }> {
    return this.post(`/sessions/${sessionId}/scene`, { nodes, ...(now ? { now } : {}) });
  }

  submitUtterance(
    sessionId: string,
    transcript: string,
    camera?: CameraPoseDoc,
    now?: string,
  ): Promise<UtteranceResponse> {
    return this.post(`/sessions/${sessionId}/utterance`, {
      transcript,
      ...(camera ? { camera } : {}),
      ...(now ? { now } : {}),
    });
  }

  performAction(
    sessionId: string,
    nodeId: string,
    action: string,
    newCenter?: [number, number, number],
    now?: string,
  ): Promise<ActionResponse> {
    return this.post(`/sessions/${sessionId}/actions`, {
      node_id: nodeId,
      action,
      actor: "console",
      ...(newCenter ? { new_center: newCenter } : {}),
      ...(now ? { now } : {}),
    });
  }

  fetchGraph(sessionId: string): Promise<GraphDoc> {
    return this.get(`/sessions/${sessionId}/graph`);
  }

  persist(sessionId: string): Promise<{ path: string }> {
    return this.post(`/sessions/${sessionId}/persist`, {});
  }
}
