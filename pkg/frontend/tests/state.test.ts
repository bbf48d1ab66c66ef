import { describe, expect, it } from "vitest";

import { ApiError } from "../src/api.js";
import {
  applyEdit,
  buildPlanRequest,
  completePlan,
  controlForError,
  enabledInterventions,
  ExplorationState,
  failPlan,
  initialState,
  selectInstance,
} from "../src/state.js";
import type { ApiErrorBody, InstanceListing, PlanResult } from "../src/types.js";
import { fixture, fixtureText } from "./helpers.js";

function withInstance(): ExplorationState {
  const listing = fixture<InstanceListing>("instances");
  return selectInstance(initialState(), listing.instances[0]);
}

describe("staleness", () => {
  it("selecting an instance marks the view stale and clears errors", () => {
    const s0 = { ...initialState(), errors: { plan: "old" } };
    const listing = fixture<InstanceListing>("instances");
    const s1 = selectInstance(s0, listing.instances[3]);
    expect(s1.instance?.id).toBe(3);
    expect(s1.stale).toBe(true);
    expect(s1.errors).toEqual({});
  });

  it("every edit kind marks the state stale", () => {
    const fresh = { ...withInstance(), stale: false };
    const edits = [
      { kind: "toggle", feature: "X1", enabled: false },
      { kind: "bound", feature: "X2", lo: -1, hi: 1 },
      { kind: "floor", value: -20 },
      { kind: "ceiling", value: 0 },
      { kind: "target", value: -11.5 },
      { kind: "cellSigma", value: 0.4 },
      { kind: "L", value: 99 },
      { kind: "direction", value: "maximize" },
      { kind: "seed", value: 7 },
    ] as const;
    for (const edit of edits) {
      expect(applyEdit(fresh, edit).stale).toBe(true);
    }
  });

  it("a completed plan clears staleness until the next edit", () => {
    const payload = fixture<PlanResult>("plan_default");
    const raw = fixtureText("plan_default");
    let s = withInstance();
    s = completePlan(s, { payload, raw });
    expect(s.stale).toBe(false);
    expect(s.lastPlan?.raw).toBe(raw);
    s = applyEdit(s, { kind: "L", value: 20 });
    expect(s.stale).toBe(true);
    expect(s.lastPlan?.payload).toBe(payload);
  });
});

describe("buildPlanRequest", () => {
  it("sends only the instance id when nothing is customised", () => {
    expect(buildPlanRequest(withInstance())).toEqual({ instance_id: 0 });
  });

  it("omits intervention until a toggle is touched, then lists enabled ones", () => {
    let s = withInstance();
    expect(buildPlanRequest(s).intervention).toBeUndefined();
    s = applyEdit(s, { kind: "toggle", feature: "X3", enabled: true });
    s = applyEdit(s, { kind: "toggle", feature: "X2", enabled: false });
    expect(enabledInterventions(s)).toEqual(["X3"]);
    expect(buildPlanRequest(s).intervention).toEqual(["X3"]);
  });

  it("a disabled toggle keeps the variable out of the request", () => {
    let s = withInstance();
    s = applyEdit(s, { kind: "toggle", feature: "X2", enabled: true });
    s = applyEdit(s, { kind: "toggle", feature: "X3", enabled: true });
    s = applyEdit(s, { kind: "toggle", feature: "X2", enabled: false });
    expect(buildPlanRequest(s).intervention).toEqual(["X3"]);
  });

  it("includes bounds only when both ends are set", () => {
    let s = withInstance();
    s = applyEdit(s, { kind: "bound", feature: "X2", lo: -6, hi: null });
    expect(buildPlanRequest(s).constraints).toBeUndefined();
    s = applyEdit(s, { kind: "bound", feature: "X2", lo: -6, hi: -5 });
    expect(buildPlanRequest(s).constraints).toEqual({
      feature_bounds: { X2: [-6, -5] },
    });
  });

  it("copies scalar constraints and search knobs only when set", () => {
    let s = withInstance();
    s = applyEdit(s, { kind: "target", value: -11.866533548329079 });
    s = applyEdit(s, { kind: "L", value: 150 });
    s = applyEdit(s, { kind: "seed", value: 0 });
    s = applyEdit(s, { kind: "direction", value: "minimize" });
    expect(buildPlanRequest(s)).toEqual({
      instance_id: 0,
      constraints: { target_value: -11.866533548329079 },
      L: 150,
      direction: "minimize",
      seed: 0,
    });
  });

  it("refuses to build a request without an instance", () => {
    expect(() => buildPlanRequest(initialState())).toThrow("no instance selected");
  });
});

describe("error placement", () => {
  it.each([
    ["l_too_large", "L"],
    ["bad_direction", "direction"],
    ["bad_intervention", "intervention"],
    ["missing_values", "instance"],
    ["unknown_instance", "instance"],
    ["bad_filter", "filter"],
    ["internal", "plan"],
  ])("routes %s next to the %s control", (code, control) => {
    expect(controlForError(code)).toBe(control);
  });

  it("keys a recorded 400 by the offending control", () => {
    const body = fixture<ApiErrorBody>("error_l_too_large");
    const s = failPlan(withInstance(), new ApiError(400, body));
    expect(s.errors).toEqual({ L: "L exceeds the service ceiling 50000" });
  });

  it("keys an unknown-instance 404 to the instance browser", () => {
    const body = fixture<ApiErrorBody>("error_unknown_instance");
    const s = failPlan(withInstance(), new ApiError(404, body));
    expect(s.errors).toEqual({ instance: "no test instance 99999" });
  });

  it("falls back to the plan control for plain errors", () => {
    const s = failPlan(withInstance(), new Error("network down"));
    expect(s.errors).toEqual({ plan: "network down" });
  });

  it("an edit clears prior errors", () => {
    let s = failPlan(withInstance(), new Error("network down"));
    s = applyEdit(s, { kind: "seed", value: 3 });
    expect(s.errors).toEqual({});
  });
});
