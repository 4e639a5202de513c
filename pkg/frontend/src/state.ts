// UI state as a pure function of gateway events plus the local input buffer.
// The DOM layer dispatches events; everything it renders comes from here, so
// a reload that replays the stream reconstructs the same view.

import type { Mode, StreamFrame } from "./types.js";

export interface UIState {
  sessionId: string | null;
  mode: Mode;
  instruction: string;
  observation: string | null; // base64 PNG
  step: number;
  success: boolean;
  scores: number[] | null;
  lastPrimitive: string | null;
  budgetLeft: number;
  pendingCorrection: string | null;
  busy: boolean;
  connected: boolean;
  notice: string | null;
  history: string[];
  historyCursor: number; // history.length = editing a fresh line
  draft: string;
  episodePath: string | null;
}

export function initialState(): UIState {
  return {
    sessionId: null,
    mode: "teleop",
    instruction: "",
    observation: null,
    step: 0,
    success: false,
    scores: null,
    lastPrimitive: null,
    budgetLeft: 0,
    pendingCorrection: null,
    busy: false,
    connected: false,
    notice: null,
    history: [],
    historyCursor: 0,
    draft: "",
    episodePath: null,
  };
}

export type UIEvent =
  | { kind: "session-started"; sessionId: string; mode: Mode; instruction: string;
      observation: string; budget: number }
  | { kind: "command-sent"; text: string }
  | { kind: "frame"; frame: StreamFrame }
  | { kind: "scores"; scores: number[]; primitive: string; observation: string;
      step: number; success: boolean; intervened: boolean; budgetLeft: number }
  | { kind: "supervision-echo"; recognized: boolean; primitive: string | null;
      observation: string; step: number; success: boolean }
  | { kind: "correction-queued"; text: string; budgetLeft: number }
  | { kind: "command-done" }
  | { kind: "busy-rejected" }
  | { kind: "stream-open" }
  | { kind: "stream-lost" }
  | { kind: "mode-changed"; mode: Mode }
  | { kind: "draft-changed"; draft: string }
  | { kind: "history-recall"; direction: -1 | 1 }
  | { kind: "episode-saved"; path: string; transitions: number }
  | { kind: "notice"; text: string | null };

export function reduce(state: UIState, event: UIEvent): UIState {
  switch (event.kind) {
    case "session-started":
      return {
        ...initialState(),
        sessionId: event.sessionId,
        mode: event.mode,
        instruction: event.instruction,
        observation: event.observation,
        budgetLeft: event.budget,
        connected: state.connected,
        history: state.history,
        historyCursor: state.history.length,
      };
    case "command-sent": {
      const history = event.text && state.history[state.history.length - 1] !== event.text
        ? [...state.history, event.text]
        : state.history;
      return { ...state, busy: true, notice: null, draft: "",
               history, historyCursor: history.length };
    }
    case "frame":
      return {
        ...state,
        observation: event.frame.observation_png_b64,
        step: event.frame.step,
        success: event.frame.success,
        lastPrimitive: event.frame.primitive_text ?? state.lastPrimitive,
      };
    case "scores":
      return {
        ...state,
        scores: event.scores,
        lastPrimitive: event.primitive,
        observation: event.observation,
        step: event.step,
        success: event.success,
        budgetLeft: event.budgetLeft,
        pendingCorrection: event.intervened ? null : state.pendingCorrection,
      };
    case "supervision-echo":
      return {
        ...state,
        lastPrimitive: event.recognized ? event.primitive : state.lastPrimitive,
        observation: event.observation,
        step: event.step,
        success: event.success,
        notice: event.recognized ? null : "command not recognized; nothing executed",
      };
    case "correction-queued":
      return { ...state, pendingCorrection: event.text, budgetLeft: event.budgetLeft };
    case "command-done":
      return { ...state, busy: false };
    case "busy-rejected":
      return { ...state, busy: false,
               notice: "gateway busy: a command is already in flight - retry" };
    case "stream-open":
      return { ...state, connected: true, notice: null };
    case "stream-lost":
      return { ...state, connected: false,
               notice: "stream disconnected - reconnecting" };
    case "mode-changed":
      return { ...state, mode: event.mode };
    case "draft-changed":
      return { ...state, draft: event.draft, historyCursor: state.history.length };
    case "history-recall": {
      if (!state.history.length) return state;
      const cursor = Math.min(
        Math.max(state.historyCursor + event.direction, 0), state.history.length);
      const draft = cursor === state.history.length ? "" : state.history[cursor];
      return { ...state, historyCursor: cursor, draft };
    }
    case "episode-saved":
      return { ...state, episodePath: event.path, busy: false,
               notice: `episode saved (${event.transitions} transitions)` };
    case "notice":
      return { ...state, notice: event.text };
  }
}
