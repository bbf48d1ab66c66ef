import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { heatBase, heatGrid, MAX_HEAT_SIDE, sampleHeat } from "../src/heat.js";
import { fixtureText, okJson, recordingFetch } from "./helpers.js";

const EXTENT = { x: [-2, 2] as [number, number], y: [0, 10] as [number, number] };

describe("heatGrid", () => {
  it("caps the grid side at the documented maximum", () => {
    const g = heatGrid(EXTENT, 500);
    expect(MAX_HEAT_SIDE).toBe(41);
    expect(g.xs).toHaveLength(41);
    expect(g.ys).toHaveLength(41);
  });

  it("never degenerates below two points per side", () => {
    const g = heatGrid(EXTENT, 1);
    expect(g.xs).toHaveLength(2);
  });

  it("spans the extent exactly, endpoints included", () => {
    const g = heatGrid(EXTENT, 5);
    expect(g.xs[0]).toBe(-2);
    expect(g.xs[g.xs.length - 1]).toBe(2);
    expect(g.ys[0]).toBe(0);
    expect(g.ys[g.ys.length - 1]).toBe(10);
    expect(g.xs).toHaveLength(5);
  });
});

describe("heatBase", () => {
  it("freezes non-pair features at the instance values", () => {
    const base = heatBase({ X1: 0.5, X2: -5.5, X3: -4.6 }, ["X1", "X3"]);
    expect(base.X2).toBe(-5.5);
  });

  it("tolerates a missing value only on the pair itself", () => {
    const base = heatBase({ X1: null, X2: -5.5, X3: -4.6 }, ["X1", "X3"]);
    expect(base.X1).toBe(0);
  });

  it("refuses to probe around an instance missing a frozen feature", () => {
    expect(() => heatBase({ X1: 0.5, X2: null, X3: -4.6 }, ["X1", "X3"])).toThrow(
      "missing X2",
    );
  });
});

describe("sampleHeat", () => {
  const density = fixtureText("density");

  it("probes the service once per grid point with frozen coordinates", async () => {
    const { impl, calls } = recordingFetch(() => okJson(density));
    const client = new ApiClient("http://svc", impl);
    const grid = heatGrid(EXTENT, 3);

    const result = await sampleHeat(client, { X1: 0, X2: -5.5, X3: 0 }, ["X1", "X3"], grid);

    expect(calls).toHaveLength(9);
    expect(result.values).toHaveLength(3);
    expect(result.values[0]).toHaveLength(3);
    const bodies = calls.map((c) => JSON.parse(c.init?.body as string) as { x: Record<string, number>; y?: number });
    for (const body of bodies) {
      expect(body.x.X2).toBe(-5.5);
      expect(body.y).toBeUndefined();
    }
    const probed = new Set(bodies.map((b) => `${b.x.X1},${b.x.X3}`));
    expect(probed.size).toBe(9);
    expect(probed.has("-2,0")).toBe(true);
    expect(probed.has("2,10")).toBe(true);
  });

  it("fills values with the replayed response, row-major", async () => {
    const { impl } = recordingFetch(() => okJson(density));
    const client = new ApiClient("http://svc", impl);
    const result = await sampleHeat(client, { X1: 0, X2: 0, X3: 0 }, ["X1", "X3"], heatGrid(EXTENT, 2));
    const expected = (JSON.parse(density) as { log_density: number }).log_density;
    expect(result.values).toEqual([
      [expected, expected],
      [expected, expected],
    ]);
  });

  it("stops sampling when the projection changes underneath it", async () => {
    const controller = new AbortController();
    const { impl, calls } = recordingFetch(() => {
      controller.abort();
      return okJson(density);
    });
    const client = new ApiClient("http://svc", impl);
    const grid = heatGrid(EXTENT, 4);

    await expect(
      sampleHeat(client, { X1: 0, X2: 0, X3: 0 }, ["X1", "X3"], grid, controller.signal),
    ).rejects.toThrow("cancelled");
    expect(calls.length).toBeLessThan(16);
  });
});
