// Round trip against a live gateway; set GATEWAY_URL to enable, e.g.
//   langarm serve --port 8173 &
//   GATEWAY_URL=http://127.0.0.1:8173 vitest run tests/integration.test.ts

import { describe, expect, it } from "vitest";

import { GatewayClient } from "../src/api.js";
import { initialState, reduce, UIState } from "../src/state.js";
import type { StreamFrame } from "../src/types.js";

const base = process.env.GATEWAY_URL;

describe.skipIf(!base)("live gateway round trip", () => {
  it("typed supervision lands in the next stream frame", async () => {
    const client = new GatewayClient(base!);
    const info = await client.createSession("point", 11, "teleop");
    let state: UIState = reduce(initialState(), {
      kind: "session-started", sessionId: info.session_id, mode: "teleop",
      instruction: info.instruction, observation: info.observation_png_b64,
      budget: 4,
    });

    const frames: StreamFrame[] = [];
    const streaming = client.streamEvents(info.session_id, 0, (frame) => {
      frames.push(frame);
      state = reduce(state, { kind: "frame", frame });
    }, 2);

    state = reduce(state, { kind: "command-sent", text: "move left a lot" });
    const reply = await client.supervise(info.session_id, "move left a lot");
    expect(reply.recognized).toBe(true);
    expect(reply.primitive_text).toBe("move arm to the left by 20cm");
    state = reduce(state, { kind: "command-done" });

    await streaming;
    expect(frames.length).toBe(1);
    expect(frames[0].step).toBe(1);
    // the single frame carried the refreshed scene into the UI state
    expect(state.observation).toBe(frames[0].observation_png_b64);
    expect(state.observation).not.toBe(info.observation_png_b64);
    expect(state.lastPrimitive).toBe("move arm to the left by 20cm");

    const done = await client.finish(info.session_id);
    expect(done.transitions).toBe(1);
  });

  it("an intervention decrements the budget and overrides exactly one step", async () => {
    const client = new GatewayClient(base!);
    const info = await client.createSession("point", 12, "policy+intervention", 4);
    let state: UIState = reduce(initialState(), {
      kind: "session-started", sessionId: info.session_id,
      mode: "policy+intervention", instruction: info.instruction,
      observation: info.observation_png_b64, budget: 4,
    });

    const queued = await client.intervene(info.session_id,
                                          "rotate gripper 90 degrees clockwise");
    state = reduce(state, { kind: "correction-queued",
                            text: "rotate gripper 90 degrees clockwise",
                            budgetLeft: queued.budget_left });
    expect(state.budgetLeft).toBe(4);

    const first = await client.policyStep(info.session_id);
    state = reduce(state, {
      kind: "scores", scores: first.scores, primitive: first.primitive_text,
      observation: first.observation_png_b64, step: first.step,
      success: first.success, intervened: first.intervened,
      budgetLeft: first.budget_left,
    });
    expect(first.intervened).toBe(true);
    expect(first.primitive_text).toBe("rotate gripper 90 degrees clockwise");
    expect(state.budgetLeft).toBe(3);
    expect(state.pendingCorrection).toBeNull();
    expect(state.scores).toHaveLength(58);

    const second = await client.policyStep(info.session_id);
    expect(second.intervened).toBe(false);
    expect(second.budget_left).toBe(3);

    await client.abort(info.session_id);
  });
});
