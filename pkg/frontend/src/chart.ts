// Pure chart geometry: score series to canvas-space polylines. Kept free of
// DOM so the rendering math is unit-testable headless.

import type { ScorePoint } from "./state.js";

export interface ChartLayout {
  width: number;
  height: number;
  windowS: number;
  now: number; // right edge of the time axis
}

export interface Point {
  x: number;
  y: number;
}

export function timeToX(t: number, layout: ChartLayout): number {
  const t0 = layout.now - layout.windowS;
  return ((t - t0) / layout.windowS) * layout.width;
}

export function probToY(p: number, layout: ChartLayout): number {
  const clamped = Math.min(Math.max(p, 0), 1);
  return (1 - clamped) * layout.height;
}

export function seriesPath(
  series: ScorePoint[],
  layout: ChartLayout,
  field: "p" | "smoothed",
): Point[] {
  const t0 = layout.now - layout.windowS;
  return series
    .filter((pt) => pt.t >= t0 && pt.t <= layout.now)
    .map((pt) => ({ x: timeToX(pt.t, layout), y: probToY(pt[field], layout) }));
}

export function thresholdY(threshold: number, layout: ChartLayout): number {
  return probToY(threshold, layout);
}

export function drawChart(
  ctx: CanvasRenderingContext2D,
  series: ScorePoint[],
  layout: ChartLayout,
  decisionThreshold: number,
  growthThreshold: number,
): void {
  ctx.clearRect(0, 0, layout.width, layout.height);

  const strokePath = (points: Point[], style: string, width: number) => {
    if (points.length < 2) return;
    ctx.strokeStyle = style;
    ctx.lineWidth = width;
    ctx.beginPath();
    ctx.moveTo(points[0].x, points[0].y);
    for (const pt of points.slice(1)) ctx.lineTo(pt.x, pt.y);
    ctx.stroke();
  };

  const hline = (p: number, style: string) => {
    const y = thresholdY(p, layout);
    ctx.strokeStyle = style;
    ctx.lineWidth = 1;
    ctx.setLineDash([4, 4]);
    ctx.beginPath();
    ctx.moveTo(0, y);
    ctx.lineTo(layout.width, y);
    ctx.stroke();
    ctx.setLineDash([]);
  };

  hline(decisionThreshold, "#c0392b");
  hline(growthThreshold, "#8e44ad");
  strokePath(seriesPath(series, layout, "p"), "#7fb3d5", 1);
  strokePath(seriesPath(series, layout, "smoothed"), "#2471a3", 2);
}
