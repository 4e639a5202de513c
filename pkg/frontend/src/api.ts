// Typed client for the gateway. Fetch is injectable so tests can run it
// against a scripted transport. The event stream is chunked NDJSON; frames
// are delivered in step order and the reader survives partial chunks.

import type {
  FinishReply,
  Mode,
  PolicyStepReply,
  SessionInfo,
  StreamFrame,
  SupervisionReply,
  VocabularyEntry,
} from "./types.js";

export class GatewayBusy extends Error {}
export class GatewayError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

type FetchLike = typeof fetch;

export class GatewayClient {
  constructor(private readonly base: string,
              private readonly fetchImpl: FetchLike = fetch) {}

  private async call<T>(path: string, method: string, body?: unknown): Promise<T> {
    const response = await this.fetchImpl(`${this.base}${path}`, {
      method,
      headers: { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload = await response.json();
    if (!response.ok) {
      const message = (payload as { error?: string }).error ?? `HTTP ${response.status}`;
      if (response.status === 409 && message.startsWith("busy")) {
        throw new GatewayBusy(message);
      }
      throw new GatewayError(response.status, message);
    }
    return payload as T;
  }

  createSession(taskId: string, seed: number, mode: Mode,
                budget?: number): Promise<SessionInfo> {
    const body: Record<string, unknown> = { task_id: taskId, seed, mode };
    if (budget !== undefined) {
      body.intervention_budget = budget;
    }
    return this.call<SessionInfo>("/sessions", "POST", body);
  }

  supervise(sessionId: string, text: string): Promise<SupervisionReply> {
    return this.call(`/sessions/${sessionId}/supervision`, "POST", { text });
  }

  policyStep(sessionId: string): Promise<PolicyStepReply> {
    return this.call(`/sessions/${sessionId}/policy_step`, "POST", {});
  }

  intervene(sessionId: string, text: string):
      Promise<{ accepted: boolean; budget_left: number }> {
    return this.call(`/sessions/${sessionId}/intervention`, "POST", { text });
  }

  finish(sessionId: string): Promise<FinishReply> {
    return this.call(`/sessions/${sessionId}/finish`, "POST", {});
  }

  abort(sessionId: string): Promise<FinishReply> {
    return this.call(`/sessions/${sessionId}/abort`, "POST", {});
  }

  vocabulary(): Promise<{ size: number; primitives: VocabularyEntry[] }> {
    return this.call("/vocabulary", "GET");
  }

  /** Stream frames from `from` onward, invoking onFrame per frame; resolves
   * when the server ends the stream. */
  async streamEvents(sessionId: string, from: number,
                     onFrame: (frame: StreamFrame) => void,
                     timeoutSeconds = 30): Promise<void> {
    const response = await this.fetchImpl(
      `${this.base}/sessions/${sessionId}/events?from=${from}&timeout=${timeoutSeconds}`,
      { method: "GET" });
    if (!response.ok || !response.body) {
      throw new GatewayError(response.status, "event stream unavailable");
    }
    const reader = response.body.getReader();
    const decoder = new TextDecoder();
    let buffer = "";
    for (;;) {
      const { done, value } = await reader.read();
      if (done) {
        break;
      }
      buffer += decoder.decode(value, { stream: true });
      let newline = buffer.indexOf("\n");
      while (newline >= 0) {
        const line = buffer.slice(0, newline).trim();
        buffer = buffer.slice(newline + 1);
        if (line) {
          onFrame(JSON.parse(line) as StreamFrame);
        }
        newline = buffer.indexOf("\n");
      }
    }
  }
}
