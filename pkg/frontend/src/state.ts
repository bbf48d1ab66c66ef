/** Exploration state owned by the client.
 *
 * The service is stateless, so everything the operator is exploring lives
 * here: the selected instance, which variables may move, constraint bounds,
 * search parameters, and the last plan. Any edit marks the state stale until
 * a fresh plan returns, and at most one plan request is in flight (a new one
 * cancels its predecessor).
 */

import { ApiClient, ApiError, PlanRequestBody } from "./api.js";
import type { InstanceRow, PlanResult } from "./types.js";

export interface BoundPair {
  lo: number | null;
  hi: number | null;
}

export interface PlanOutcome {
  payload: PlanResult;
  raw: string;
}

export interface ExplorationState {
  instance: InstanceRow | null;
  /** feature -> allowed to move; empty until the user touches a toggle,
   * which means "server default selection" */
  toggles: Record<string, boolean>;
  togglesTouched: boolean;
  bounds: Record<string, BoundPair>;
  predictionFloor: number | null;
  predictionCeiling: number | null;
  targetValue: number | null;
  cellSigma: number | null;
  L: number | null;
  direction: "minimize" | "maximize" | null;
  seed: number | null;
  lastPlan: PlanOutcome | null;
  stale: boolean;
  /** control key -> message, surfaced next to the offending input */
  errors: Record<string, string>;
}

export function initialState(): ExplorationState {
  return {
    instance: null,
    toggles: {},
    togglesTouched: false,
    bounds: {},
    predictionFloor: null,
    predictionCeiling: null,
    targetValue: null,
    cellSigma: null,
    L: null,
    direction: null,
    seed: null,
    lastPlan: null,
    stale: false,
    errors: {},
  };
}

export function selectInstance(s: ExplorationState, row: InstanceRow): ExplorationState {
  return { ...s, instance: row, stale: true, errors: {} };
}

export type Edit =
  | { kind: "toggle"; feature: string; enabled: boolean }
  | { kind: "bound"; feature: string; lo: number | null; hi: number | null }
  | { kind: "floor"; value: number | null }
  | { kind: "ceiling"; value: number | null }
  | { kind: "target"; value: number | null }
  | { kind: "cellSigma"; value: number | null }
  | { kind: "L"; value: number | null }
  | { kind: "direction"; value: "minimize" | "maximize" | null }
  | { kind: "seed"; value: number | null };

export function applyEdit(s: ExplorationState, edit: Edit): ExplorationState {
  const next: ExplorationState = { ...s, stale: true, errors: {} };
  switch (edit.kind) {
    case "toggle":
      next.toggles = { ...s.toggles, [edit.feature]: edit.enabled };
      next.togglesTouched = true;
      break;
    case "bound":
      next.bounds = { ...s.bounds, [edit.feature]: { lo: edit.lo, hi: edit.hi } };
      break;
    case "floor":
      next.predictionFloor = edit.value;
      break;
    case "ceiling":
      next.predictionCeiling = edit.value;
      break;
    case "target":
      next.targetValue = edit.value;
      break;
    case "cellSigma":
      next.cellSigma = edit.value;
      break;
    case "L":
      next.L = edit.value;
      break;
    case "direction":
      next.direction = edit.value;
      break;
    case "seed":
      next.seed = edit.value;
      break;
  }
  return next;
}

export function enabledInterventions(s: ExplorationState): string[] {
  return Object.keys(s.toggles)
    .filter((f) => s.toggles[f])
    .sort();
}

/** Translate the exploration state into a /v1/plan body. Unset controls are
 * omitted so the service falls back to the bundle's configuration. */
export function buildPlanRequest(s: ExplorationState): PlanRequestBody {
  if (!s.instance) throw new Error("no instance selected");
  const body: PlanRequestBody = { instance_id: s.instance.id };
  if (s.togglesTouched) body.intervention = enabledInterventions(s);
  const featureBounds: Record<string, [number, number]> = {};
  for (const [name, pair] of Object.entries(s.bounds)) {
    if (pair.lo !== null && pair.hi !== null) featureBounds[name] = [pair.lo, pair.hi];
  }
  const constraints: NonNullable<PlanRequestBody["constraints"]> = {};
  if (Object.keys(featureBounds).length) constraints.feature_bounds = featureBounds;
  if (s.predictionFloor !== null) constraints.prediction_floor = s.predictionFloor;
  if (s.predictionCeiling !== null) constraints.prediction_ceiling = s.predictionCeiling;
  if (s.targetValue !== null) constraints.target_value = s.targetValue;
  if (Object.keys(constraints).length) body.constraints = constraints;
  if (s.cellSigma !== null) body.cell_sigma = s.cellSigma;
  if (s.L !== null) body.L = s.L;
  if (s.direction !== null) body.direction = s.direction;
  if (s.seed !== null) body.seed = s.seed;
  return body;
}

/** Which control a service error belongs next to. */
export function controlForError(code: string): string {
  switch (code) {
    case "l_too_large":
      return "L";
    case "bad_direction":
      return "direction";
    case "bad_intervention":
      return "intervention";
    case "missing_values":
    case "unknown_instance":
      return "instance";
    case "bad_filter":
      return "filter";
    default:
      return "plan";
  }
}

export function completePlan(s: ExplorationState, outcome: PlanOutcome): ExplorationState {
  return { ...s, lastPlan: outcome, stale: false, errors: {} };
}

export function failPlan(s: ExplorationState, err: unknown): ExplorationState {
  if (err instanceof ApiError) {
    return { ...s, errors: { [controlForError(err.body.code)]: err.body.message } };
  }
  return { ...s, errors: { plan: err instanceof Error ? err.message : String(err) } };
}

/** Owns the one-in-flight invariant: starting a run aborts the previous one.
 * A superseded or cancelled run resolves to null instead of throwing. */
export class PlanRunner {
  private current: AbortController | null = null;

  get inFlight(): boolean {
    return this.current !== null;
  }

  cancel(): void {
    this.current?.abort();
    this.current = null;
  }

  async run(client: ApiClient, body: PlanRequestBody): Promise<PlanOutcome | null> {
    this.current?.abort();
    const mine = new AbortController();
    this.current = mine;
    try {
      const outcome = await client.plan(body, mine.signal);
      if (this.current !== mine) return null; // superseded while awaiting
      this.current = null;
      return outcome;
    } catch (err) {
      if (mine.signal.aborted) return null;
      if (this.current === mine) this.current = null;
      throw err;
    }
  }
}
