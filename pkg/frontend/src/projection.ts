/** 2-D projection panel: training scatter for a chosen variable pair with
 * the planned path overlaid, optionally on a density heatmap. All real units
 * straight from service responses; switching the pair is a pure re-render.
 */

import type { HeatResult } from "./heat.js";
import type { InstanceRow, PlanResult } from "./types.js";

export interface Pt {
  x: number;
  y: number;
}

export interface ProjectionModel {
  xName: string;
  yName: string;
  train: Pt[];
  path: Pt[];
  extent: { x: [number, number]; y: [number, number] };
}

function padded(lo: number, hi: number): [number, number] {
  const span = hi - lo || 1;
  return [lo - 0.05 * span, hi + 0.05 * span];
}

export function projectionModel(
  p: PlanResult,
  pair: [string, string],
  instances: InstanceRow[],
): ProjectionModel {
  const ix = p.feature_names.indexOf(pair[0]);
  const iy = p.feature_names.indexOf(pair[1]);
  if (ix < 0 || iy < 0) throw new Error(`unknown projection pair ${pair[0]}, ${pair[1]}`);
  const path = p.steps.map((s) => ({ x: s.coords_real[ix], y: s.coords_real[iy] }));
  const train: Pt[] = [];
  for (const row of instances) {
    const x = row.features[pair[0]];
    const y = row.features[pair[1]];
    if (x !== null && x !== undefined && y !== null && y !== undefined) train.push({ x, y });
  }
  const xs = [...train, ...path].map((pt) => pt.x);
  const ys = [...train, ...path].map((pt) => pt.y);
  return {
    xName: pair[0],
    yName: pair[1],
    train,
    path,
    extent: { x: padded(Math.min(...xs), Math.max(...xs)), y: padded(Math.min(...ys), Math.max(...ys)) },
  };
}

const W = 420;
const H = 420;

function scaler(domain: [number, number], range: [number, number]) {
  const [d0, d1] = domain;
  const [r0, r1] = range;
  const k = (r1 - r0) / (d1 - d0 || 1);
  return (v: number) => r0 + (v - d0) * k;
}

function heatColor(t: number): string {
  // light -> dark blue ramp on normalized log-density
  const c = Math.round(240 - 160 * t);
  return `rgb(${c},${c},255)`;
}

export function projectionSvg(m: ProjectionModel, heat?: HeatResult | null): string {
  const sx = scaler(m.extent.x, [30, W - 10]);
  const sy = scaler(m.extent.y, [H - 25, 10]);
  const parts: string[] = [
    `<svg class="projection" viewBox="0 0 ${W} ${H}" role="img" aria-label="path projection">`,
  ];
  if (heat && heat.values.length) {
    const flat = heat.values.flat().filter((v) => Number.isFinite(v));
    const lo = Math.min(...flat);
    const hi = Math.max(...flat);
    const span = hi - lo || 1;
    const cw = heat.xs.length > 1 ? (sx(heat.xs[1]) - sx(heat.xs[0])) : 8;
    const ch = heat.ys.length > 1 ? (sy(heat.ys[0]) - sy(heat.ys[1])) : 8;
    for (let j = 0; j < heat.ys.length; j++) {
      for (let i = 0; i < heat.xs.length; i++) {
        const v = heat.values[j][i];
        if (!Number.isFinite(v)) continue;
        const t = (v - lo) / span;
        parts.push(
          `<rect x="${(sx(heat.xs[i]) - cw / 2).toFixed(1)}" y="${(sy(heat.ys[j]) - ch / 2).toFixed(1)}"` +
            ` width="${Math.abs(cw).toFixed(1)}" height="${Math.abs(ch).toFixed(1)}" fill="${heatColor(t)}"/>`,
        );
      }
    }
  }
  for (const pt of m.train) {
    parts.push(`<circle cx="${sx(pt.x).toFixed(1)}" cy="${sy(pt.y).toFixed(1)}" r="2" class="train"/>`);
  }
  if (m.path.length) {
    const pts = m.path.map((pt) => `${sx(pt.x).toFixed(1)},${sy(pt.y).toFixed(1)}`).join(" ");
    parts.push(`<polyline points="${pts}" class="path" fill="none"/>`);
    const start = m.path[0];
    parts.push(
      `<rect x="${(sx(start.x) - 4).toFixed(1)}" y="${(sy(start.y) - 4).toFixed(1)}" width="8" height="8" class="start"/>`,
    );
  }
  parts.push(
    `<text x="${W / 2}" y="${H - 6}" class="axis">${m.xName}</text>`,
    `<text x="12" y="${H / 2}" class="axis" transform="rotate(-90 12 ${H / 2})">${m.yName}</text>`,
    `</svg>`,
  );
  return parts.join("");
}
