/** Density heatmap sampling: a bounded grid of /v1/density probes over the
 * projection pair, with the other features frozen at the instance's values.
 * Batches are cancelled (via AbortSignal) when the projection changes.
 */

import { ApiClient } from "./api.js";

export const MAX_HEAT_SIDE = 41;

export interface HeatGrid {
  xs: number[];
  ys: number[];
}

export interface HeatResult extends HeatGrid {
  /** values[j][i] = log-density at (xs[i], ys[j]) */
  values: number[][];
}

function linspace(lo: number, hi: number, n: number): number[] {
  if (n === 1) return [(lo + hi) / 2];
  const step = (hi - lo) / (n - 1);
  return Array.from({ length: n }, (_, i) => lo + i * step);
}

/** Grid axes over the extent, capped at MAX_HEAT_SIDE points per side. */
export function heatGrid(
  extent: { x: [number, number]; y: [number, number] },
  resolution: number,
): HeatGrid {
  const n = Math.max(2, Math.min(MAX_HEAT_SIDE, Math.floor(resolution)));
  return { xs: linspace(extent.x[0], extent.x[1], n), ys: linspace(extent.y[0], extent.y[1], n) };
}

export async function sampleHeat(
  client: ApiClient,
  base: Record<string, number>,
  pair: [string, string],
  grid: HeatGrid,
  signal?: AbortSignal,
): Promise<HeatResult> {
  const values: number[][] = [];
  for (const y of grid.ys) {
    if (signal?.aborted) throw new DOMException("heat sampling cancelled", "AbortError");
    // one concurrent batch per row keeps request volume civil
    const row = await Promise.all(
      grid.xs.map(async (x) => {
        const d = await client.density({ ...base, [pair[0]]: x, [pair[1]]: y }, undefined, signal);
        return d.log_density;
      }),
    );
    values.push(row);
  }
  return { xs: grid.xs, ys: grid.ys, values };
}

/** Frozen feature values for heat probes: the instance's own coordinates,
 * which must be complete for every non-pair feature. */
export function heatBase(
  features: Record<string, number | null>,
  pair: [string, string],
): Record<string, number> {
  const base: Record<string, number> = {};
  for (const [name, value] of Object.entries(features)) {
    if (value === null) {
      if (name === pair[0] || name === pair[1]) {
        base[name] = 0; // overwritten by the grid point
        continue;
      }
      throw new Error(`instance is missing ${name}; cannot probe density`);
    }
    base[name] = value;
  }
  return base;
}
