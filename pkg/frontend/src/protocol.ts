// Telemetry wire schema: one JSON object per WebSocket text frame.
// Broadcast messages carry a "type"; command acks carry an "ok" flag.

export interface ScoreMessage {
  type: "score";
  t: number;
  p: number;
  smoothed: number;
  frame_ms: number;
}

export interface EventMessage {
  type: "event";
  state: "onset" | "offset";
  t: number;
}

export interface DiagMessage {
  type: "diag";
  rtf: number;
  frames_ok: number;
  frames_total: number;
}

export interface ErrorMessage {
  type: "error";
  msg: string;
}

export type TelemetryMessage = ScoreMessage | EventMessage | DiagMessage | ErrorMessage;

export interface Ack {
  ok: boolean;
  cmd?: string;
  msg?: string;
}

export type ControlCommand =
  | { cmd: "set_decision_threshold"; value: number }
  | { cmd: "set_growth_threshold"; value: number }
  | { cmd: "set_growth_step"; value: number }
  | { cmd: "load_clip"; path: string }
  | { cmd: "start" }
  | { cmd: "stop" };

function isFiniteNumber(v: unknown): v is number {
  return typeof v === "number" && Number.isFinite(v);
}

export function parseTelemetry(raw: string): TelemetryMessage | Ack | null {
  let data: unknown;
  try {
    data = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof data !== "object" || data === null) return null;
  const obj = data as Record<string, unknown>;

  if (typeof obj.ok === "boolean") {
    return {
      ok: obj.ok,
      cmd: typeof obj.cmd === "string" ? obj.cmd : undefined,
      msg: typeof obj.msg === "string" ? obj.msg : undefined,
    };
  }

  switch (obj.type) {
    case "score":
      if (isFiniteNumber(obj.t) && isFiniteNumber(obj.p) && isFiniteNumber(obj.smoothed)) {
        return {
          type: "score",
          t: obj.t,
          p: obj.p,
          smoothed: obj.smoothed,
          frame_ms: isFiniteNumber(obj.frame_ms) ? obj.frame_ms : 0,
        };
      }
      return null;
    case "event":
      if ((obj.state === "onset" || obj.state === "offset") && isFiniteNumber(obj.t)) {
        return { type: "event", state: obj.state, t: obj.t };
      }
      return null;
    case "diag":
      if (isFiniteNumber(obj.rtf) && isFiniteNumber(obj.frames_ok) && isFiniteNumber(obj.frames_total)) {
        return { type: "diag", rtf: obj.rtf, frames_ok: obj.frames_ok, frames_total: obj.frames_total };
      }
      return null;
    case "error":
      if (typeof obj.msg === "string") return { type: "error", msg: obj.msg };
      return null;
    default:
      return null;
  }
}

export function isAck(msg: TelemetryMessage | Ack): msg is Ack {
  return (msg as Ack).ok !== undefined;
}
