// Browser wiring: connects the client to DOM controls. All protocol and
// state logic lives in the imported modules; this file stays thin.

import { drawChart } from "./chart.js";
import { DashboardClient } from "./socket.js";
import type { UiState } from "./state.js";

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (el === null) throw new Error(`missing #${id}`);
  return el as T;
}

const canvas = byId<HTMLCanvasElement>("chart");
const ctx = canvas.getContext("2d")!;
const statusEl = byId<HTMLSpanElement>("status");
const eventEl = byId<HTMLDivElement>("event-banner");
const diagEl = byId<HTMLSpanElement>("diag");
const errorEl = byId<HTMLSpanElement>("error");
const decisionSlider = byId<HTMLInputElement>("decision-threshold");
const decisionLabel = byId<HTMLSpanElement>("decision-label");
const growthSlider = byId<HTMLInputElement>("growth-threshold");
const growthLabel = byId<HTMLSpanElement>("growth-label");
const stepInput = byId<HTMLInputElement>("growth-step");
const clipInput = byId<HTMLInputElement>("clip-path");

const params = new URLSearchParams(location.search);
const url = params.get("ws") ?? `ws://${location.hostname || "127.0.0.1"}:8765/ws`;

function render(state: UiState): void {
  statusEl.textContent = state.connection;
  statusEl.className = `status ${state.connection}`;
  eventEl.classList.toggle("active", state.activeEvent);
  eventEl.textContent = state.activeEvent ? "SIREN DETECTED" : "no event";
  diagEl.textContent =
    `rtf ${state.diag.rtf.toFixed(2)} | frames ${state.diag.framesOk}/${state.diag.framesTotal}`;
  errorEl.textContent = state.lastError ?? "";
  decisionLabel.textContent = state.thresholds.decision.toFixed(2);
  growthLabel.textContent = state.thresholds.growth.toFixed(2);
  const now = state.series.length > 0 ? state.series[state.series.length - 1].t : 0;
  drawChart(ctx, state.series,
    { width: canvas.width, height: canvas.height, windowS: state.windowS, now },
    state.thresholds.decision, state.thresholds.growth);
}

const client = new DashboardClient({ url, onChange: render });
client.connect();

function sendOrToast(cmd: Parameters<DashboardClient["sendControl"]>[0]): void {
  client.sendControl(cmd).then((ack) => {
    if (!ack.ok) errorEl.textContent = ack.msg ?? "command rejected";
  }).catch((err) => {
    errorEl.textContent = String(err);
  });
}

decisionSlider.addEventListener("change", () => {
  sendOrToast({ cmd: "set_decision_threshold", value: Number(decisionSlider.value) });
});
growthSlider.addEventListener("change", () => {
  sendOrToast({ cmd: "set_growth_threshold", value: Number(growthSlider.value) });
});
stepInput.addEventListener("change", () => {
  sendOrToast({ cmd: "set_growth_step", value: Number(stepInput.value) });
});
byId<HTMLButtonElement>("load-clip").addEventListener("click", () => {
  sendOrToast({ cmd: "load_clip", path: clipInput.value });
});
byId<HTMLButtonElement>("start").addEventListener("click", () => sendOrToast({ cmd: "start" }));
byId<HTMLButtonElement>("stop").addEventListener("click", () => sendOrToast({ cmd: "stop" }));
