/** Wire types for the /v1 API. Field names mirror the JSON exactly. */

export interface PlanStep {
  offsets: number[];
  feature: string | null;
  move: number;
  prediction: number;
  log_density: number;
  coords: number[];
  coords_real: number[];
}

export interface PlanConstraints {
  feature_bounds: Record<string, number[]>;
  prediction_floor: number | null;
  prediction_ceiling: number | null;
  target_value: number | null;
}

export interface PlanConfig {
  L: number;
  baseline_count: number;
  bounds: { lo: number[]; hi: number[] };
  cell_sizes: number[];
  constraints: PlanConstraints;
  direction: string;
  intervention: string[];
  weight_floor: boolean;
}

export interface PlanDiagnostics {
  settled_count: number;
  negative_weight_count: number;
  early_exhaustion: boolean;
}

export interface PlanResult {
  steps: PlanStep[];
  log_actionability: number;
  baseline_log_actionabilities: number[];
  score: number;
  diagnostics: PlanDiagnostics;
  seed: number;
  config: PlanConfig;
  instance_id: number | null;
  feature_names: string[];
}

export interface InstanceRow {
  id: number;
  features: Record<string, number | null>;
  response: number | null;
  prediction: number | null;
}

export interface InstanceListing {
  instances: InstanceRow[];
  count: number;
}

export interface DensityResponse {
  log_density: number;
  prediction: number;
}

export interface HealthResponse {
  status: string;
  build: string;
  bundle: string;
}

export interface ApiErrorBody {
  code: string;
  message: string;
  detail: unknown;
}
