/** SVG path construction for the answer-distance chart (pure functions). */

import { ChartPoint } from "./view.js";

export interface ChartScale {
  width: number;
  height: number;
  xMin: number;
  xMax: number;
  yMin: number;
  yMax: number;
}

export function fitScale(points: ChartPoint[], width = 640, height = 280): ChartScale {
  const xs = points.map((p) => p.leaves);
  const ys = points.flatMap((p) =>
    [p.bsf, p.lower, p.point].filter((v): v is number => v !== null));
  const xMax = xs.length ? Math.max(...xs) : 1;
  const yMax = ys.length ? Math.max(...ys) : 1;
  const yMin = ys.length ? Math.min(...ys, 0) : 0;
  return { width, height, xMin: 0, xMax: Math.max(xMax, 1), yMin, yMax: yMax || 1 };
}

export function toX(scale: ChartScale, leaves: number): number {
  return ((leaves - scale.xMin) / (scale.xMax - scale.xMin || 1)) * scale.width;
}

export function toY(scale: ChartScale, value: number): number {
  const span = scale.yMax - scale.yMin || 1;
  return scale.height - ((value - scale.yMin) / span) * scale.height;
}

export function linePath(points: ChartPoint[], scale: ChartScale,
                         pick: (p: ChartPoint) => number | null): string {
  const parts: string[] = [];
  for (const p of points) {
    const v = pick(p);
    if (v === null) {
      continue;
    }
    const cmd = parts.length === 0 ? "M" : "L";
    parts.push(`${cmd}${toX(scale, p.leaves).toFixed(1)},${toY(scale, v).toFixed(1)}`);
  }
  return parts.join(" ");
}

/** Shaded band between the probabilistic lower bound and the hard bsf bound. */
export function bandPath(points: ChartPoint[], scale: ChartScale): string {
  const usable = points.filter((p) => p.bsf !== null && p.lower !== null);
  if (usable.length === 0) {
    return "";
  }
  const upper = usable.map(
    (p) => `${toX(scale, p.leaves).toFixed(1)},${toY(scale, p.bsf as number).toFixed(1)}`);
  const lower = usable
    .slice()
    .reverse()
    .map((p) => `${toX(scale, p.leaves).toFixed(1)},${toY(scale, p.lower as number).toFixed(1)}`);
  return `M${upper.join(" L")} L${lower.join(" L")} Z`;
}
