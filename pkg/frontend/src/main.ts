// DOM shell: renders UIState, forwards inputs as events, keeps exactly one
// command in flight, and re-subscribes the event stream on disconnect.

import { GatewayBusy, GatewayClient } from "./api.js";
import { initialState, reduce, UIEvent, UIState } from "./state.js";
import { primitiveArrow } from "./overlay.js";
import { scoreBars } from "./scorebars.js";
import type { Mode, VocabularyEntry } from "./types.js";

const gatewayBase =
  new URLSearchParams(window.location.search).get("gateway")
  ?? "http://127.0.0.1:8173";
const client = new GatewayClient(gatewayBase);

let state: UIState = initialState();
let vocabulary: VocabularyEntry[] = [];
let lastAction: number[] | null = null;
let streamGeneration = 0;

const $ = <T extends HTMLElement>(id: string): T =>
  document.getElementById(id) as T;

function dispatch(event: UIEvent): void {
  state = reduce(state, event);
  render();
}

function render(): void {
  const canvas = $<HTMLCanvasElement>("scene");
  const ctx = canvas.getContext("2d");
  if (ctx && state.observation) {
    const img = new Image();
    img.onload = () => {
      ctx.imageSmoothingEnabled = false;
      ctx.drawImage(img, 0, 0, canvas.width, canvas.height);
      const arrow = primitiveArrow(lastAction, state.lastPrimitive);
      if (arrow && (arrow.dx !== 0 || arrow.dy !== 0)) {
        ctx.strokeStyle = "#ff2ba6";
        ctx.lineWidth = 3;
        ctx.beginPath();
        const cx = canvas.width / 2;
        const cy = canvas.height / 2;
        ctx.moveTo(cx, cy);
        ctx.lineTo(cx + arrow.dx, cy + arrow.dy);
        ctx.stroke();
      }
    };
    img.src = `data:image/png;base64,${state.observation}`;
  }

  $("instruction").textContent = state.instruction || "(no session)";
  $("status").textContent = state.success ? "success" : `step ${state.step}`;
  $("primitive").textContent = state.lastPrimitive ?? "-";
  $("budget").textContent = String(state.budgetLeft);
  const banner = $("banner");
  banner.textContent = state.notice ?? "";
  banner.style.display = state.notice ? "block" : "none";

  const input = $<HTMLInputElement>("command");
  input.disabled = state.busy || !state.sessionId;
  if (input.value !== state.draft) {
    input.value = state.draft;
  }
  $<HTMLButtonElement>("step-policy").disabled =
    state.busy || !state.sessionId || state.mode === "teleop";
  $<HTMLButtonElement>("save").disabled = !state.sessionId || state.busy;

  const bars = scoreBars(state.scores);
  const holder = $("scorebars");
  holder.innerHTML = "";
  for (const bar of bars) {
    const div = document.createElement("div");
    div.className = bar.best ? "bar best" : "bar";
    div.style.height = `${Math.max(bar.height * 100, 2)}%`;
    div.title = vocabulary[bar.id]?.text ?? String(bar.id);
    holder.appendChild(div);
  }
}

async function subscribe(sessionId: string): Promise<void> {
  const generation = ++streamGeneration;
  let from = 0;
  for (;;) {
    if (generation !== streamGeneration) {
      return; // superseded by a newer session
    }
    try {
      dispatch({ kind: "stream-open" });
      await client.streamEvents(sessionId, from, (frame) => {
        from = frame.step;
        dispatch({ kind: "frame", frame });
      });
    } catch {
      dispatch({ kind: "stream-lost" });
      await new Promise((resolve) => setTimeout(resolve, 1000));
    }
  }
}

async function startSession(): Promise<void> {
  const mode = $<HTMLSelectElement>("mode").value as Mode;
  const task = $<HTMLSelectElement>("task").value;
  const seed = Number($<HTMLInputElement>("seed").value) || 0;
  const info = await client.createSession(task, seed, mode);
  lastAction = null;
  dispatch({
    kind: "session-started", sessionId: info.session_id, mode,
    instruction: info.instruction, observation: info.observation_png_b64,
    budget: 4,
  });
  void subscribe(info.session_id);
}

async function submitCommand(): Promise<void> {
  const text = $<HTMLInputElement>("command").value.trim();
  if (!text || !state.sessionId || state.busy) {
    return;
  }
  dispatch({ kind: "command-sent", text });
  try {
    if (state.mode === "policy+intervention") {
      const reply = await client.intervene(state.sessionId, text);
      dispatch({ kind: "correction-queued", text, budgetLeft: reply.budget_left });
    } else {
      const reply = await client.supervise(state.sessionId, text);
      if (reply.recognized && reply.action) {
        lastAction = reply.action;
      }
      dispatch({
        kind: "supervision-echo", recognized: reply.recognized,
        primitive: reply.primitive_text, observation: reply.observation_png_b64,
        step: reply.step, success: reply.success,
      });
    }
  } catch (err) {
    dispatch(err instanceof GatewayBusy
      ? { kind: "busy-rejected" }
      : { kind: "notice", text: String(err) });
  } finally {
    dispatch({ kind: "command-done" });
  }
}

async function stepPolicy(): Promise<void> {
  if (!state.sessionId || state.busy) {
    return;
  }
  dispatch({ kind: "command-sent", text: "" });
  try {
    const reply = await client.policyStep(state.sessionId);
    lastAction = vocabulary[reply.primitive_id]?.action ?? null;
    dispatch({
      kind: "scores", scores: reply.scores, primitive: reply.primitive_text,
      observation: reply.observation_png_b64, step: reply.step,
      success: reply.success, intervened: reply.intervened,
      budgetLeft: reply.budget_left,
    });
  } catch (err) {
    dispatch(err instanceof GatewayBusy
      ? { kind: "busy-rejected" }
      : { kind: "notice", text: String(err) });
  } finally {
    dispatch({ kind: "command-done" });
  }
}

async function saveEpisode(): Promise<void> {
  if (!state.sessionId) {
    return;
  }
  dispatch({ kind: "command-sent", text: "" });
  try {
    const reply = await client.finish(state.sessionId);
    dispatch({ kind: "episode-saved", path: reply.episode_path,
               transitions: reply.transitions });
  } catch (err) {
    dispatch({ kind: "notice", text: String(err) });
  } finally {
    dispatch({ kind: "command-done" });
  }
}

window.addEventListener("DOMContentLoaded", () => {
  void client.vocabulary().then((reply) => {
    vocabulary = reply.primitives;
  }).catch(() => {
    dispatch({ kind: "notice", text: `gateway unreachable at ${gatewayBase}` });
  });

  $("start").addEventListener("click", () => void startSession());
  $("save").addEventListener("click", () => void saveEpisode());
  $("step-policy").addEventListener("click", () => void stepPolicy());
  $<HTMLSelectElement>("mode").addEventListener("change", (event) => {
    dispatch({ kind: "mode-changed",
               mode: (event.target as HTMLSelectElement).value as Mode });
  });
  const input = $<HTMLInputElement>("command");
  input.addEventListener("input", () => {
    dispatch({ kind: "draft-changed", draft: input.value });
  });
  input.addEventListener("keydown", (event) => {
    if (event.key === "Enter") {
      void submitCommand();
    } else if (event.key === "ArrowUp") {
      event.preventDefault();
      dispatch({ kind: "history-recall", direction: -1 });
    } else if (event.key === "ArrowDown") {
      event.preventDefault();
      dispatch({ kind: "history-recall", direction: 1 });
    }
  });
  render();
});
