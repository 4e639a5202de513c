import { describe, expect, it } from "vitest";

import { GatewayBusy, GatewayClient, GatewayError } from "../src/api.js";
import type { StreamFrame } from "../src/types.js";

function jsonResponse(payload: unknown, status = 200): Response {
  return new Response(JSON.stringify(payload), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

function scriptedFetch(script: Record<string, (init?: RequestInit) => Response>) {
  const seen: Array<{ url: string; body: unknown }> = [];
  const impl = async (input: RequestInfo | URL, init?: RequestInit) => {
    const url = String(input);
    const key = Object.keys(script).find((k) => url.includes(k));
    if (!key) {
      throw new Error(`no script for ${url}`);
    }
    seen.push({ url, body: init?.body ? JSON.parse(String(init.body)) : undefined });
    return script[key](init);
  };
  return { impl: impl as typeof fetch, seen };
}

describe("gateway client", () => {
  it("creates sessions with the documented body", async () => {
    const { impl, seen } = scriptedFetch({
      "/sessions": () => jsonResponse({ session_id: "x", mode: "teleop",
                                        task_id: "point", seed: 3,
                                        instruction: "point at the red disk",
                                        observation_png_b64: "AA==", step: 0 }),
    });
    const client = new GatewayClient("http://gw", impl);
    const info = await client.createSession("point", 3, "teleop");
    expect(info.session_id).toBe("x");
    expect(seen[0].body).toEqual({ task_id: "point", seed: 3, mode: "teleop" });
  });

  it("raises GatewayBusy on a busy 409 so the UI can offer a retry", async () => {
    const { impl } = scriptedFetch({
      "/supervision": () => jsonResponse({ error: "busy: a command is already in flight" }, 409),
    });
    const client = new GatewayClient("http://gw", impl);
    await expect(client.supervise("s", "move left")).rejects.toBeInstanceOf(GatewayBusy);
  });

  it("raises GatewayError with the status for other failures", async () => {
    const { impl } = scriptedFetch({
      "/sessions/unknown": () => jsonResponse({ error: "unknown session" }, 404),
    });
    const client = new GatewayClient("http://gw", impl);
    try {
      await client.finish("unknown");
      expect.unreachable();
    } catch (err) {
      expect(err).toBeInstanceOf(GatewayError);
      expect((err as GatewayError).status).toBe(404);
    }
  });

  it("parses a chunked NDJSON stream, including split lines", async () => {
    const frames: StreamFrame[] = [];
    const f1 = JSON.stringify({ v: 1, step: 1, primitive_id: 4,
                                primitive_text: "move arm forward by 1cm",
                                success: false, observation_png_b64: "AA==" });
    const f2 = JSON.stringify({ v: 1, step: 2, primitive_id: 12,
                                primitive_text: "move arm to the left by 1cm",
                                success: true, observation_png_b64: "BB==" });
    const whole = `${f1}\n${f2}\n`;
    const chunks = [whole.slice(0, 25), whole.slice(25, 90), whole.slice(90)];
    const stream = new ReadableStream<Uint8Array>({
      start(controller) {
        for (const chunk of chunks) {
          controller.enqueue(new TextEncoder().encode(chunk));
        }
        controller.close();
      },
    });
    const impl = (async () => new Response(stream, { status: 200 })) as unknown as typeof fetch;
    const client = new GatewayClient("http://gw", impl);
    await client.streamEvents("s", 0, (frame) => frames.push(frame));
    expect(frames.map((f) => f.step)).toEqual([1, 2]);
    expect(frames[1].success).toBe(true);
  });
});
