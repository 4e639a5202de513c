// Wire types for the gateway contract (GET /api documents the same shapes).

export type Mode = "teleop" | "policy" | "policy+intervention";

export interface SessionInfo {
  session_id: string;
  mode: Mode;
  task_id: string;
  seed: number;
  instruction: string;
  observation_png_b64: string;
  step: number;
}

export interface SupervisionReply {
  recognized: boolean;
  primitive_id: number | null;
  primitive_text: string | null;
  action: number[] | null;
  observation_png_b64: string;
  step: number;
  success: boolean;
}

export interface PolicyStepReply {
  primitive_id: number;
  primitive_text: string;
  intervened: boolean;
  budget_left: number;
  scores: number[];
  cosines: number[];
  observation_png_b64: string;
  step: number;
  success: boolean;
}

export interface StreamFrame {
  v: number;
  step: number;
  primitive_id: number | null;
  primitive_text: string | null;
  success: boolean;
  observation_png_b64: string;
}

export interface VocabularyEntry {
  id: number;
  text: string;
  action: number[];
}

export interface FinishReply {
  episode_path: string;
  transitions: number;
  success: boolean;
  status: string;
}
