// Operator-console state. Threshold fields hold the engine's last ACKED
// values only; local edits never render until the engine confirms them.

import type { TelemetryMessage } from "./protocol.js";

export type ConnectionStatus = "connecting" | "open" | "closed";

export interface ScorePoint {
  t: number;
  p: number;
  smoothed: number;
}

export interface Thresholds {
  decision: number;
  growth: number;
  growthStep: number;
}

export interface Diag {
  rtf: number;
  framesOk: number;
  framesTotal: number;
}

export interface UiState {
  connection: ConnectionStatus;
  series: ScorePoint[];
  windowS: number;
  activeEvent: boolean;
  thresholds: Thresholds;
  diag: Diag;
  lastError: string | null;
}

export const DEFAULT_THRESHOLDS: Thresholds = {
  decision: 0.5,
  growth: 0.6,
  growthStep: 0.4,
};

export function initialState(windowS = 60): UiState {
  return {
    connection: "connecting",
    series: [],
    windowS,
    activeEvent: false,
    thresholds: { ...DEFAULT_THRESHOLDS },
    diag: { rtf: 0, framesOk: 0, framesTotal: 0 },
    lastError: null,
  };
}

export function applyMessage(state: UiState, msg: TelemetryMessage): UiState {
  switch (msg.type) {
    case "score": {
      const series = [...state.series, { t: msg.t, p: msg.p, smoothed: msg.smoothed }];
      const cutoff = msg.t - state.windowS;
      return { ...state, series: series.filter((pt) => pt.t >= cutoff) };
    }
    case "event":
      return { ...state, activeEvent: msg.state === "onset" };
    case "diag":
      return {
        ...state,
        diag: { rtf: msg.rtf, framesOk: msg.frames_ok, framesTotal: msg.frames_total },
      };
    case "error":
      return { ...state, lastError: msg.msg };
  }
}

export function setConnection(state: UiState, connection: ConnectionStatus): UiState {
  return { ...state, connection };
}

// Called only after the engine acked the corresponding command.
export function commitAckedValue(state: UiState, cmd: string, value: number): UiState {
  switch (cmd) {
    case "set_decision_threshold":
      return { ...state, thresholds: { ...state.thresholds, decision: value } };
    case "set_growth_threshold":
      return { ...state, thresholds: { ...state.thresholds, growth: value } };
    case "set_growth_step":
      return { ...state, thresholds: { ...state.thresholds, growthStep: value } };
    default:
      return state;
  }
}
