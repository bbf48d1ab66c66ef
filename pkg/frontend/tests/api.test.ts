import { describe, expect, it } from "vitest";

import { ApiClient, ApiError, instancesQuery } from "../src/api.js";
import type { ApiErrorBody, InstanceListing, PlanResult } from "../src/types.js";
import { errorJson, fixture, fixtureText, okJson, recordingFetch } from "./helpers.js";

describe("instancesQuery", () => {
  it("omits the filter when absent", () => {
    expect(instancesQuery()).toBe("/v1/instances");
    expect(instancesQuery(null)).toBe("/v1/instances");
  });

  it("mirrors the server threshold grammar, url-encoded", () => {
    expect(instancesQuery({ op: ">=", value: 100 })).toBe(
      "/v1/instances?filter=response%3E%3D100",
    );
    expect(instancesQuery({ op: "<=", value: -2.5 })).toBe(
      "/v1/instances?filter=response%3C%3D-2.5",
    );
  });
});

describe("ApiClient", () => {
  it("returns the plan payload together with the exact raw bytes", async () => {
    const raw = fixtureText("plan_default");
    const { impl, calls } = recordingFetch(() => okJson(raw));
    const client = new ApiClient("http://svc", impl);

    const { payload, raw: got } = await client.plan({ instance_id: 0 });

    expect(got).toBe(raw);
    expect(payload.instance_id).toBe(0);
    expect(payload.steps).toHaveLength(3);
    expect(calls[0].url).toBe("http://svc/v1/plan");
    expect(calls[0].init?.method).toBe("POST");
    expect(JSON.parse(calls[0].init?.body as string)).toEqual({ instance_id: 0 });
  });

  it("strips trailing slashes from the base url", async () => {
    const { impl, calls } = recordingFetch(() => okJson(fixtureText("instances")));
    const client = new ApiClient("http://svc:8080///", impl);
    await client.instances();
    expect(calls[0].url).toBe("http://svc:8080/v1/instances");
  });

  it("parses the recorded instance listing", async () => {
    const { impl } = recordingFetch(() => okJson(fixtureText("instances")));
    const client = new ApiClient("http://svc", impl);
    const listing = await client.instances({ op: ">=", value: -100 });
    const expected = fixture<InstanceListing>("instances");
    expect(listing.count).toBe(expected.count);
    expect(listing.instances[0]).toEqual(expected.instances[0]);
  });

  it("turns a service error body into an ApiError", async () => {
    const body = fixture<ApiErrorBody>("error_l_too_large");
    const { impl } = recordingFetch(() => errorJson(400, body));
    const client = new ApiClient("http://svc", impl);

    const err = await client.plan({ instance_id: 0, L: 60000 }).catch((e: unknown) => e);

    expect(err).toBeInstanceOf(ApiError);
    const apiErr = err as ApiError;
    expect(apiErr.status).toBe(400);
    expect(apiErr.body.code).toBe("l_too_large");
    expect(apiErr.message).toBe(body.message);
  });

  it("synthesizes a code when the error body is not json", async () => {
    const { impl } = recordingFetch(
      () => new Response("boom", { status: 503, statusText: "Service Unavailable" }),
    );
    const client = new ApiClient("http://svc", impl);
    const err = (await client.health().catch((e: unknown) => e)) as ApiError;
    expect(err.status).toBe(503);
    expect(err.body.code).toBe("http_503");
  });

  it("omits y from the density body unless given", async () => {
    const { impl, calls } = recordingFetch(() => okJson(fixtureText("density")));
    const client = new ApiClient("http://svc", impl);

    await client.density({ X1: 0.1, X2: 0.2, X3: 0.3 });
    await client.density([0.1, 0.2, 0.3], -11.0);

    expect(JSON.parse(calls[0].init?.body as string)).toEqual({
      x: { X1: 0.1, X2: 0.2, X3: 0.3 },
    });
    expect(JSON.parse(calls[1].init?.body as string)).toEqual({
      x: [0.1, 0.2, 0.3],
      y: -11.0,
    });
  });

  it("replays the recorded density response without recomputation", async () => {
    const { impl } = recordingFetch(() => okJson(fixtureText("density")));
    const client = new ApiClient("http://svc", impl);
    const d = await client.density({ X1: 0, X2: 0, X3: 0 });
    const expected = fixture<{ log_density: number; prediction: number }>("density");
    expect(d.log_density).toBe(expected.log_density);
    expect(d.prediction).toBe(expected.prediction);
  });

  it("keeps recorded plan bytes stable under reparse", () => {
    const raw = fixtureText("plan_default");
    const payload = JSON.parse(raw) as PlanResult;
    expect(payload.feature_names).toEqual(["X1", "X2", "X3"]);
    expect(payload.config.L).toBe(150);
  });
});
